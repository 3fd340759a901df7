fn main() {
    std::process::exit(sgqa_cli::run_from(std::env::args_os()));
}
