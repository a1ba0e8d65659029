fn main() {
    std::process::exit(mirrornoise::cli::run())
}
