"""Command-line interface: encode, decode, eval, bdrate, gop-plan, selftest."""

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import NbvcError


def _emit_error(exc):
    if isinstance(exc, NbvcError):
        payload = {"code": exc.code, "message": str(exc), "context": exc.context}
    else:
        payload = {"code": "internal", "message": str(exc), "context": {}}
    print(json.dumps(payload), file=sys.stderr)


def _load_model(checkpoint):
    from .model import load_checkpoint

    return load_checkpoint(checkpoint)


def _cmd_encode(args):
    from .codec import encode_sequence
    from .ingest import ingest_sequence

    frames = ingest_sequence(args.input, args.format, args.width, args.height,
                             max_frames=args.frames)
    model = _load_model(args.checkpoint)
    data = encode_sequence(model, frames, args.intra_period, args.rate_idx)
    Path(args.output).write_bytes(data)
    h, w = frames[0].height, frames[0].width
    bpp = len(data) * 8.0 / (w * h * len(frames))
    print(f"encoded {len(frames)} frames -> {len(data)} bytes ({bpp:.4f} bpp)")
    return 0


def _cmd_decode(args):
    from .codec import decode_sequence
    from .ingest import save_png_dir

    data = Path(args.input).read_bytes()
    model = _load_model(args.checkpoint)
    frames, header = decode_sequence(model, data,
                                     allow_hash_mismatch=args.allow_hash_mismatch)
    out = save_png_dir(frames, args.output)
    info = {
        "stream_bytes": len(data),
        "width": header.width,
        "height": header.height,
        "frame_count": header.frame_count,
        "rate_index": header.rate_index,
        "bpp": len(data) * 8.0 / (header.width * header.height * header.frame_count),
    }
    (out / "decode_info.json").write_text(json.dumps(info, indent=2))
    print(f"decoded {len(frames)} frames into {out}")
    return 0


def _cmd_eval(args):
    from .ingest import ingest_sequence, load_png_dir
    from .metrics import sequence_psnr

    ref = ingest_sequence(args.ref, args.ref_format, args.width, args.height,
                          max_frames=args.frames)
    dist = load_png_dir(args.dist)
    if len(dist) > len(ref):
        dist = dist[:len(ref)]
    mean_psnr = sequence_psnr(ref[:len(dist)], dist)

    if args.stream:
        stream_bytes = Path(args.stream).stat().st_size
        h, w = ref[0].height, ref[0].width
        bpp = stream_bytes * 8.0 / (w * h * len(dist))
        rate_idx = args.rate_idx if args.rate_idx is not None else -1
    else:
        info_path = Path(args.dist) / "decode_info.json"
        if not info_path.exists():
            raise NbvcError("bpp source missing: pass --stream or decode first",
                            {"dist": str(args.dist)})
        info = json.loads(info_path.read_text())
        bpp = info["bpp"]
        rate_idx = args.rate_idx if args.rate_idx is not None else info["rate_index"]

    sequence = args.sequence or Path(args.ref).stem
    out = Path(args.csv)
    new_file = not out.exists()
    with out.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(["sequence", "rate_idx", "bpp", "psnr_db"])
        writer.writerow([sequence, rate_idx, f"{bpp:.6f}", f"{mean_psnr:.4f}"])
    print(f"{sequence}: rate_idx={rate_idx} bpp={bpp:.4f} psnr={mean_psnr:.2f} dB")
    return 0


def _read_rd_csv(path):
    from .metrics import RDPoint

    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(row["sequence"], []).append(
                RDPoint(bpp=float(row["bpp"]), psnr_db=float(row["psnr_db"])))
    return rows


def _cmd_bdrate(args):
    from .metrics import bd_rate

    anchor = _read_rd_csv(args.anchor)
    test = _read_rd_csv(args.test)
    common = sorted(set(anchor) & set(test))
    if not common:
        raise NbvcError("no common sequences between the two CSVs")
    values = []
    for seq in common:
        value = bd_rate(anchor[seq], test[seq])
        values.append(value)
        print(f"{seq}: {value:+.2f}%")
    avg = sum(values) / len(values)
    print(f"{avg:.2f}")
    return 0


def _cmd_gop_plan(args):
    from .gop import build_gop_plan, plan_to_json_lines, span_summary

    plan = build_gop_plan(args.frames, args.intra_period)
    anchors, complete, incomplete = span_summary(plan)
    print(f"I frames at {anchors}; {complete} complete span(s), "
          f"{incomplete} incomplete span(s)")
    if args.json:
        print(plan_to_json_lines(plan))
    return 0


def _cmd_selftest(args):
    from .selftest import run_selftests

    return run_selftests(verbose=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="nbvc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode frames to a .nvb stream")
    enc.add_argument("--input", required=True)
    enc.add_argument("--format", default="png-dir", choices=["png-dir", "yuv420-8bit"])
    enc.add_argument("--width", type=int)
    enc.add_argument("--height", type=int)
    enc.add_argument("--frames", type=int, default=None)
    enc.add_argument("--intra-period", type=int, default=32)
    enc.add_argument("--rate-idx", type=int, default=1, choices=range(4))
    enc.add_argument("--checkpoint", required=True)
    enc.add_argument("--output", required=True)
    enc.set_defaults(fn=_cmd_encode)

    dec = sub.add_parser("decode", help="decode a .nvb stream to PNG frames")
    dec.add_argument("--input", required=True)
    dec.add_argument("--checkpoint", required=True)
    dec.add_argument("--output", required=True)
    dec.add_argument("--allow-hash-mismatch", action="store_true")
    dec.set_defaults(fn=_cmd_decode)

    ev = sub.add_parser("eval", help="PSNR/bpp against a reference")
    ev.add_argument("--ref", required=True)
    ev.add_argument("--ref-format", default="png-dir", choices=["png-dir", "yuv420-8bit"])
    ev.add_argument("--width", type=int)
    ev.add_argument("--height", type=int)
    ev.add_argument("--frames", type=int, default=None)
    ev.add_argument("--dist", required=True)
    ev.add_argument("--csv", required=True)
    ev.add_argument("--stream")
    ev.add_argument("--sequence")
    ev.add_argument("--rate-idx", type=int, default=None)
    ev.set_defaults(fn=_cmd_eval)

    bd = sub.add_parser("bdrate", help="BD-rate between two RD CSVs")
    bd.add_argument("--anchor", required=True)
    bd.add_argument("--test", required=True)
    bd.set_defaults(fn=_cmd_bdrate)

    gp = sub.add_parser("gop-plan", help="print the coding plan")
    gp.add_argument("--frames", type=int, required=True)
    gp.add_argument("--intra-period", type=int, required=True)
    gp.add_argument("--json", action="store_true",
                    help="dump one PlanEntry per line as JSON")
    gp.set_defaults(fn=_cmd_gop_plan)

    st = sub.add_parser("selftest", help="run the invariant suites")
    st.set_defaults(fn=_cmd_selftest)
    return parser


def cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except Exception as exc:
        _emit_error(exc)
        return 1


def main():
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
