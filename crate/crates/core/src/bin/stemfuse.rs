fn main() {
    std::process::exit(stemfuse::cli::main_with_args(std::env::args_os()));
}
