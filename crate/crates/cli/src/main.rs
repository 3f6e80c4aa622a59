fn main() {
    std::process::exit(fetal_biometry_cli::run(std::env::args_os()));
}
