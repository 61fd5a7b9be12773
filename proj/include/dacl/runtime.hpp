#pragma once

namespace dacl {

/// Keeps freed tensor buffers in the process heap instead of returning them to the
/// OS after every op. Training allocates and frees the same large sizes each step,
/// and without this most of the time goes to page faults. No-op off glibc.
void tune_allocator();

}  // namespace dacl
