fn main() {
    // CLI wired up once the experiment harness lands.
    eprintln!("otrelax: not yet wired");
    std::process::exit(2);
}
