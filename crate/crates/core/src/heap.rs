//! Allocator tuning for long training runs.

/// Keeps freed memory in the glibc heap so per-step edge matrices reuse pages
/// instead of being mapped and faulted in again. No-op elsewhere.
pub fn retain_freed_memory() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
