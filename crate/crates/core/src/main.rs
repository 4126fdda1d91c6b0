fn main() {
    std::process::exit(misdetect::cli::dispatch(std::env::args_os()));
}
