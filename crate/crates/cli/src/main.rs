fn main() {
    std::process::exit(sigverify_cli::run_from_args(std::env::args_os()));
}
