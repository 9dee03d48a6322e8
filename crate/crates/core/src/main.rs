fn main() {
    std::process::exit(systolic_sca::cli::run(std::env::args_os()));
}
