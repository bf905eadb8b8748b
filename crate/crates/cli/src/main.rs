fn main() {
    std::process::exit(onoma_cli::run(std::env::args_os()));
}
