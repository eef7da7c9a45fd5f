fn main() {
    std::process::exit(qstokes::cli::main_with_args(std::env::args_os()));
}
