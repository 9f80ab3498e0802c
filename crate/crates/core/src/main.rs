fn main() {
    std::process::exit(bmc::cli::run(std::env::args_os()));
}
