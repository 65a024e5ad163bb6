use trustgrid::estimation::GridCase;

fn main() {
    let case = GridCase::synthetic("case118", 118, 68, 118);
    println!("{}", serde_json::to_string_pretty(&case).unwrap());
}
