//! Drive the experiment commands from a config string, as the `twostate`
//! binary does, writing into a scratch directory.

use twostate::commands::{cmd_reconstruct, cmd_stability, cmd_validate};
use twostate::config::ExperimentConfig;

const CONFIG: &str = r#"
[domain]
lo = [0.0]
hi = [1.0]
t_final = 0.05

[grid]
nodes = [101]
dt = 0.000125

[baseline]
a = [0.3]
p = [0.5, 0.2]

[study]
amplitudes = [0.0, 0.05]
seeds = [1, 2, 3]

[reconstruct]
amplitude = 0.05
seed = 2
"#;

fn main() {
    let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
    for (k, v) in cmd_validate(&cfg).unwrap().summary {
        println!("{k} = {v}");
    }
    let dir = std::env::temp_dir().join("twostate-example");
    let out = cmd_stability(&cfg, &dir).unwrap();
    println!("{}", std::fs::read_to_string(dir.join("stability.csv")).unwrap());
    let out2 = cmd_reconstruct(&cfg, &dir).unwrap();
    for (k, v) in &out2.summary {
        println!("{k} = {v}");
    }
    println!("exit codes: stability {}, reconstruct {}", out.exit_code(), out2.exit_code());

    let bad = CONFIG.replace("dt = 0.000125", "dt = -1.0");
    println!("invalid: {}", ExperimentConfig::from_toml(&bad).unwrap_err());
    println!("round trip equal: {}", ExperimentConfig::from_toml(&cfg.to_toml()).unwrap() == cfg);
}
