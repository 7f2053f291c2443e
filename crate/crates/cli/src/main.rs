fn main() {
    std::process::exit(oodrl_cli::run(std::env::args_os()));
}
