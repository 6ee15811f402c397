fn main() {
    std::process::exit(priorfuse::cli::dispatch(std::env::args_os()));
}
