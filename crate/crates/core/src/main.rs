fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(tcgrid::cli::run(&argv));
}
