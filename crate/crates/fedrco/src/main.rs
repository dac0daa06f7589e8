fn main() {
    std::process::exit(fedrco::run_cli());
}
