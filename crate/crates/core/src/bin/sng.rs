fn main() {
    std::process::exit(sng::cli::dispatch(std::env::args_os()));
}
