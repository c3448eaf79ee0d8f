//! Second-order convergence of the trapezoidal scheme against a
//! manufactured solution with all couplings switched on.

use twostate::commands::manufactured_error;
use twostate::config::ExperimentConfig;

const CONFIG: &str = r#"
[domain]
lo = [0.0]
hi = [1.0]
t_final = 0.5

[grid]
nodes = [41]
dt = 0.0125

[baseline]
bound = 3.0
a = [0.6]
p = [0.4, 0.5]
qplus = [1.0, -0.5]
qminus = [0.3, -1.0]
"#;

fn main() {
    let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
    let mut prev: Option<f64> = None;
    println!("{:>6} {:>6} {:>12} {:>7}", "nodes", "steps", "max error", "order");
    for k in 0..4 {
        let (n, steps) = (40 * (1 << k) + 1, 40 * (1 << k));
        let e = manufactured_error(&cfg, n, steps).unwrap();
        let order = prev.map(|p| format!("{:.3}", (p / e).log2())).unwrap_or_default();
        println!("{n:>6} {steps:>6} {e:>12.4e} {order:>7}");
        prev = Some(e);
    }
}
