fn main() {
    std::process::exit(metafn::harness::cli::run(std::env::args_os()));
}
