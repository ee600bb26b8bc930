fn main() {
    std::process::exit(chromabrush::cli::main_with_args(std::env::args_os()));
}
