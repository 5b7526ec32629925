//! Splits a city into station regions and checks that every POI lies in
//! the Voronoi cell of the station it was assigned to.

use std::collections::HashMap;

use trajecta::psr::{assign_regions, voronoi_polygons, BBox};
use trajecta::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let assignment = assign_regions(&data.stations, &data.pois)?;
    let proj = assignment.projection;

    let points = data.stations.iter().map(|s| proj.apply(s.lon, s.lat));
    let cells = voronoi_polygons(&data.stations, &proj, BBox::around(points, 500.0))?;
    let by_station: HashMap<_, _> = cells.iter().map(|c| (c.station_id.as_str(), c)).collect();

    let inside = data
        .pois
        .iter()
        .filter(|p| by_station[assignment.region_of(&p.id).unwrap()].contains(proj.apply(p.lon, p.lat), 1e-6))
        .count();
    println!("{inside}/{} POIs inside their assigned cell", data.pois.len());

    let mut sizes: Vec<(usize, &str)> = assignment.region_pois.iter().map(|(s, p)| (p.len(), s.as_str())).collect();
    sizes.sort_by(|a, b| b.cmp(a));
    for (n, s) in sizes.iter().take(5) {
        println!("  {s}: {n} POIs, {} cell vertices", by_station[s].vertices.len());
    }
    Ok(())
}
