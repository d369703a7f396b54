"""Subprocess coder service: framed requests over stdin/stdout pipes.

Each message is a u32 LE length followed by the framing body. An op=0
request shuts the loop down. Run as ``python -m nbvc.coder.service``.
"""

import struct
import sys

from .framing import OP_SHUTDOWN, handle_request


def serve(stdin, stdout):
    while True:
        header = stdin.read(4)
        if len(header) < 4:
            return
        (length,) = struct.unpack("<I", header)
        body = stdin.read(length)
        if len(body) < length:
            return
        if body and body[0] == OP_SHUTDOWN:
            return
        resp = handle_request(body)
        stdout.write(struct.pack("<I", len(resp)))
        stdout.write(resp)
        stdout.flush()


def main():
    serve(sys.stdin.buffer, sys.stdout.buffer)


if __name__ == "__main__":
    main()
