//! The two heterogeneous coefficients used in the experiments, printed as maps.

use msgfem::coefficients::{ascii_map, channel_field, skyscraper_field, ChannelGeometry};
use msgfem::mesh::Mesh;

fn main() -> msgfem::Result<()> {
    let mesh = Mesh::unit(2, 64)?;
    let sky = skyscraper_field(&mesh, 7, 8, 2e6)?;
    println!("skyscraper: contrast {:.1e}", sky.contrast());
    println!("{}", ascii_map(&mesh, &sky, 2));

    let geometry = ChannelGeometry::default_for([4, 4]);
    let channels = channel_field(&mesh, 6, &geometry)?;
    println!("channels: contrast {:.1e}", channels.contrast());
    println!("{}", ascii_map(&mesh, &channels, 1));
    Ok(())
}
