fn main() {
    std::process::exit(hbl_cli::run(std::env::args_os()));
}
