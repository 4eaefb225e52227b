//! Train briefly with TCP telemetry enabled and print what a client receives.
//!
//! cargo run --release --example telemetry_listener

use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use droneracer::harness::{run, MetricsRecord, RunConfig, TelemetryServer, Trainer};

fn main() -> droneracer::Result<()> {
    let server = TelemetryServer::bind("127.0.0.1:0")?;
    let addr = server.local_addr();
    println!("telemetry on {addr}");

    let client = thread::spawn(move || -> droneracer::Result<usize> {
        let stream = TcpStream::connect(addr)?;
        let mut n = 0;
        for line in BufReader::new(stream).lines() {
            let rec = MetricsRecord::parse_line(&line?)?;
            println!("  {:?} step {} return {:?} policy_loss {:?}", rec.kind, rec.global_step, rec.episodic_return, rec.policy_loss);
            n += 1;
        }
        Ok(n)
    });
    while server.client_count() == 0 {
        thread::sleep(Duration::from_millis(5));
    }

    let mut cfg = RunConfig::mini();
    cfg.train.total_steps = 4096;
    cfg.train.hidden = vec![64, 64, 64];
    let out = std::env::temp_dir().join("droneracer-telemetry");
    let _ = std::fs::remove_dir_all(&out);
    let summary = run(&mut Trainer::new(cfg, 0)?, &out, Some(server), None)?;
    let received = client.join().expect("client thread")?;
    println!("wrote {} records, client received {received}", summary.records_written);
    Ok(())
}
