//! Bit-exact range coder over integer symbols with quantized Laplace CDF
//! tables, exposed three ways: a Rust API, a C ABI for in-process foreign
//! calls, and a pipe server binary speaking the same framing.

pub mod cdf;
pub mod framing;
pub mod rc;

pub use cdf::{build_laplace_cdf, build_uniform_cdf, CdfTable};
pub use framing::{handle_request, serialize_tables};
pub use rc::{decode_stream, encode_stream, DecodeError};

use std::slice;

/// C ABI entry point: process one framed request, allocate the response.
/// Returns 0 on success; the response must be released via `nvb_coder_free`.
///
/// # Safety
/// `req` must point to `req_len` readable bytes; `resp`/`resp_len` must be
/// valid out-pointers.
#[no_mangle]
pub unsafe extern "C" fn nvb_coder_call(req: *const u8, req_len: usize,
                                        resp: *mut *mut u8,
                                        resp_len: *mut usize) -> i32 {
    if req.is_null() || resp.is_null() || resp_len.is_null() {
        return -1;
    }
    let request = slice::from_raw_parts(req, req_len);
    let response = handle_request(request).into_boxed_slice();
    let len = response.len();
    let ptr = Box::into_raw(response) as *mut u8;
    *resp = ptr;
    *resp_len = len;
    0
}

/// # Safety
/// Must be called exactly once with the pointer/length pair produced by
/// `nvb_coder_call`.
#[no_mangle]
pub unsafe extern "C" fn nvb_coder_free(ptr: *mut u8, len: usize) {
    if !ptr.is_null() {
        drop(Box::from_raw(slice::from_raw_parts_mut(ptr, len)));
    }
}
