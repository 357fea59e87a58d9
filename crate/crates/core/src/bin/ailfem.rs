fn main() {
    std::process::exit(ailfem_core::cli::main_with(std::env::args_os()));
}
