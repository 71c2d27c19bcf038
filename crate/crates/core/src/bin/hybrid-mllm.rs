fn main() {
    std::process::exit(hybrid_mllm::cli::main_with_args(std::env::args_os()));
}
