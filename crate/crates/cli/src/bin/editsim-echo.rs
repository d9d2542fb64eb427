//! Reference external adapter: serves the wire protocol on stdio with an
//! exact-string memo.

fn main() -> std::io::Result<()> {
    let stdin = std::io::stdin();
    editsim::adapter::serve_echo(stdin.lock(), std::io::stdout().lock())
}
