fn main() {
    std::process::exit(dcloss::cli::run(std::env::args_os()));
}
