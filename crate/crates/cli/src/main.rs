fn main() {
    std::process::exit(proxskip_cli::main_with_args(std::env::args_os()));
}
