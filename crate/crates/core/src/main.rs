fn main() {
    std::process::exit(robust_spc::cli::run(std::env::args_os()));
}
