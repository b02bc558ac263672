//! Solve a small semi-discrete instance with both solvers and render the
//! resulting Laguerre diagram.
//!
//! Run with: cargo run --example semidiscrete_demo

use otkit::geometry::{build_diagram, cell_masses, PolygonalDensity, SiteSet, Vec2};
use otkit::measures::Potential;
use otkit::semidiscrete::{damped_newton, oliker_prussner, NewtonConfig, OPConfig};

fn main() -> otkit::Result<()> {
    let rho = PolygonalDensity::unit_square();
    let sites = SiteSet::new(vec![
        Vec2::new(0.2, 0.3),
        Vec2::new(0.7, 0.6),
        Vec2::new(0.4, 0.8),
        Vec2::new(0.8, 0.2),
    ])?;
    let nu = [0.1, 0.3, 0.4, 0.2];

    let newton = damped_newton(
        &sites,
        &rho,
        &nu,
        &Potential::zeros(sites.len()),
        &NewtonConfig::new(1e-9)?,
    )?;
    println!("newton: {} iterations, psi = {:?}", newton.trace.steps.len(), newton.psi);

    let op = oliker_prussner(&sites, &rho, &nu, &OPConfig::for_instance(1e-3, 0, &rho, &sites)?)?;
    println!("decrements: {} steps, masses = {:?}", op.trace.steps.len(), op.masses);

    let diag = build_diagram(&sites, &newton.psi, &rho)?;
    let masses = cell_masses(&diag, &rho);
    std::fs::write("cells.svg", otkit::svg::render_diagram(&diag, &sites, &rho, &masses))?;
    println!("wrote cells.svg");
    Ok(())
}
