fn main() {
    std::process::exit(ocr::cli::dispatch(std::env::args_os()));
}
