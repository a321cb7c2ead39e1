fn main() {
    std::process::exit(geopmp::io::run_cli(std::env::args_os()));
}
