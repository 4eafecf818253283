fn main() {
    std::process::exit(netreg::cli::run(std::env::args_os()));
}
