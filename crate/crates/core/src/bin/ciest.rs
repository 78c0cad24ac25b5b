fn main() {
    std::process::exit(ciest::cli::main_with_args(std::env::args_os()));
}
