fn main() {
    std::process::exit(freqgan::cli::run(std::env::args_os()));
}
