//! Turn one rendered frame into a scene graph and print its text form.

use digknow::scene_graph::{compute_relations, serialize_text, GeometryParams};
use digknow::simulator::{bundled_scenario, render_frame};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = bundled_scenario("kitchen").ok_or("no kitchen scenario")?.instantiate(0)?;
    let frame = render_frame(&world, 0);
    for o in &frame.objects {
        println!("{:<16} {:?} .. {:?}", o.instance_id, o.aabb.min, o.aabb.max);
    }
    let graph = compute_relations(&frame, &GeometryParams::default())?;
    println!("\n{}", serialize_text(&graph));
    Ok(())
}
