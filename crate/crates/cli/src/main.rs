fn main() {
    std::process::exit(robai_cli::run(std::env::args_os()));
}
