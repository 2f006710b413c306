fn main() {
    ebim_gnn::heap::retain_freed_memory();
    std::process::exit(ebim_gnn::cli::run(std::env::args_os()));
}
