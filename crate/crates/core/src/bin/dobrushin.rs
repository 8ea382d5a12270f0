fn main() {
    std::process::exit(dobrushin::cli::run(std::env::args_os()));
}
