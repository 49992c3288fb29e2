fn main() {
    std::process::exit(wpf::cli::run(std::env::args_os()));
}
