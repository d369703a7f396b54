//! Pipe server: u32 LE length-prefixed framing requests on stdin, responses
//! on stdout. An op=0 message (or EOF) shuts the loop down.

use std::io::{self, Read, Write};

use nvb_coder::handle_request;

fn main() -> io::Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut input = stdin.lock();
    let mut output = stdout.lock();
    loop {
        let mut header = [0u8; 4];
        if input.read_exact(&mut header).is_err() {
            return Ok(());
        }
        let length = u32::from_le_bytes(header) as usize;
        let mut body = vec![0u8; length];
        input.read_exact(&mut body)?;
        if body.first() == Some(&0) {
            return Ok(());
        }
        let resp = handle_request(&body);
        output.write_all(&(resp.len() as u32).to_le_bytes())?;
        output.write_all(&resp)?;
        output.flush()?;
    }
}
