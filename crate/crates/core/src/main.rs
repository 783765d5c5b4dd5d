fn main() {
    std::process::exit(netshift::cli::run(std::env::args_os()));
}
