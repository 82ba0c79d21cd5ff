fn main() {
    std::process::exit(robust_dc::cli::dispatch(std::env::args_os()));
}
