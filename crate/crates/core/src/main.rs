fn main() {
    std::process::exit(ciconv::cli::run(std::env::args_os()));
}
