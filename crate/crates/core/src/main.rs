fn main() {
    std::process::exit(linsel::cli::run(std::env::args_os()));
}
