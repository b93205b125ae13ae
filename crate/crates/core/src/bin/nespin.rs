fn main() {
    std::process::exit(nespin::cli::run(std::env::args_os()));
}
