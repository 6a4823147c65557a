fn main() {
    std::process::exit(auxcool::cli::main_with_args(std::env::args_os()));
}
