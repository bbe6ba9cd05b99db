use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use keyforge_core::bench::{self, ExpiryRow, REFERENCE_EXPIRY_BYTES};
use keyforge_core::tagtree::TagSpace;

/// Benchmarks and size tables, written as CSV to stdout.
#[derive(Parser)]
#[command(name = "kf-bench", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Signing throughput per tree depth.
    Sign(Throughput),
    /// Verification throughput per tree depth.
    Verify(Throughput),
    /// Expiry information sizes for prefix expiry, uniform layouts of depth 1-7 plus the calendar layout.
    ExpirySizes,
}

#[derive(clap::Args)]
struct Throughput {
    /// Depths, e.g. `1-7` or `1,4,7`.
    #[arg(long, default_value = "1-7")]
    depths: String,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
}

fn parse_depths(s: &str) -> std::result::Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let bad = || format!("bad depth list {s:?}");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.iter().any(|&d| d == 0 || d > 16) {
        return Err("depths must be within 1..=16".into());
    }
    Ok(out)
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn throughput(out: &mut impl Write, op: &str, t: &Throughput) -> Result<()> {
    writeln!(out, "op,depth,branching,iterations,seconds,ops_per_sec,us_per_op")?;
    for depth in parse_depths(&t.depths)? {
        let row = if op == "sign" {
            bench::bench_sign(depth, t.iterations)
        } else {
            bench::bench_verify(depth, t.iterations)
        };
        writeln!(
            out,
            "{op},{},{},{},{:.6},{:.1},{:.1}",
            row.depth,
            row.branching,
            row.iterations,
            row.seconds,
            row.ops_per_sec(),
            row.micros_per_op()
        )?;
    }
    Ok(())
}

fn expiry_sizes(out: &mut impl Write) -> Result<()> {
    writeln!(
        out,
        "layout,depth,branching,tree_leaves,span,span_leaves,worst_nodes_tree,worst_bytes_tree,worst_nodes,worst_bytes,mean_nodes,mean_bytes,reference_max_bytes,reference_mean_bytes,tree_max_ratio,max_ratio,mean_ratio"
    )?;
    let mut print = |layout: &str, row: &ExpiryRow, span: &str, reference: Option<(u64, u64)>| -> Result<()> {
        let worst_bytes = ExpiryRow::bytes(row.worst_nodes_span as f64);
        let mean_bytes = ExpiryRow::bytes(row.mean_nodes_span);
        let tree_bytes = ExpiryRow::bytes(row.worst_nodes_tree as f64);
        let (rmax, rmean, qtree, qmax, qmean) = match reference {
            Some((max, mean)) => (
                max.to_string(),
                mean.to_string(),
                format!("{:.4}", tree_bytes / max as f64),
                format!("{:.4}", worst_bytes / max as f64),
                format!("{:.4}", mean_bytes / mean as f64),
            ),
            None => Default::default(),
        };
        writeln!(
            out,
            "{layout},{},{},{},{span},{},{},{tree_bytes:.0},{},{worst_bytes:.0},{:.2},{mean_bytes:.0},{rmax},{rmean},{qtree},{qmax},{qmean}",
            row.depth,
            row.branching,
            row.tree_leaves,
            row.span_leaves,
            row.worst_nodes_tree,
            row.worst_nodes_span,
            row.mean_nodes_span,
        )?;
        Ok(())
    };
    for (depth, avg1, max1, avg2, max2) in REFERENCE_EXPIRY_BYTES {
        let space = bench::uniform_two_year(depth);
        print("uniform", &bench::expiry_row(&space, bench::ONE_YEAR_OF_CHUNKS), "1y", Some((max1, avg1)))?;
        print("uniform", &bench::expiry_row(&space, bench::TWO_YEARS_OF_CHUNKS), "2y", Some((max2, avg2)))?;
    }
    // 2024-01-01T00:00:00Z, two calendar years of 15-minute chunks.
    let calendar = TagSpace::calendar(1_704_067_200, 2, 96).expect("valid calendar");
    print("calendar", &bench::expiry_row(&calendar, bench::ONE_YEAR_OF_CHUNKS), "1y", None)?;
    print("calendar", &bench::expiry_row(&calendar, bench::TWO_YEARS_OF_CHUNKS), "2y", None)
}

fn main() -> ExitCode {
    let mut out = std::io::stdout().lock();
    let result = match Args::parse().cmd {
        Cmd::Sign(t) => throughput(&mut out, "sign", &t),
        Cmd::Verify(t) => throughput(&mut out, "verify", &t),
        Cmd::ExpirySizes => expiry_sizes(&mut out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // The reader went away (e.g. `| head`); nothing left to do.
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("kf-bench: {e}");
            ExitCode::FAILURE
        }
    }
}
