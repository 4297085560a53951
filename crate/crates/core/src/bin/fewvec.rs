fn main() {
    std::process::exit(fewvec::cli::dispatch(std::env::args_os()));
}
