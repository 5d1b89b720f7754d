fn main() {
    std::process::exit(stl_synth::cli::run());
}
