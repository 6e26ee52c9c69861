//! The versioned model document: canonical bytes, bitwise-identical forward
//! after a round trip, and the path document the CLI consumes.
//!
//!     cargo run --example model_documents

use neural_flow::activation::ActivationFamily;
use neural_flow::coupling::Coupling;
use neural_flow::matrix::Matrix;
use neural_flow::network::{load_path, save_path, Layer, LayerKind, Network};
use neural_flow::params::{ParamPath, ParamSegment, StructureKind};
use neural_flow::state::ChannelKind;

fn main() -> neural_flow::Result<()> {
    let w = Matrix::from_rows(&[vec![0.5, -0.25], vec![0.1, 0.9]])?;
    let net = Network::new(
        StructureKind::Separation,
        ChannelKind::Scalar,
        ActivationFamily::relu(),
        Matrix::from_rows(&[vec![1.0], vec![-1.0]])?,
        vec![
            Layer::new(
                Coupling::dense(w.clone())?,
                vec![0.1, -0.2],
                LayerKind::PlainActivated {
                    gamma: 0.5,
                    scale: 2.0,
                },
            )?,
            Layer::new(Coupling::dense(w)?, vec![0.0, 0.3], LayerKind::Affine)?,
        ],
        Matrix::from_rows(&[vec![1.0, 1.0]])?,
    )?;

    let text = net.save()?;
    println!("--- network document ({} bytes) ---", text.len());
    for line in text.lines().take(14) {
        println!("{line}");
    }
    println!("...");

    let back = Network::load(&text)?;
    let mut bitwise = true;
    for x in [-2.0, -0.5, 0.0, 0.3, 1.7] {
        bitwise &= net.forward_vec(&[x])?[0].to_bits() == back.forward_vec(&[x])?[0].to_bits();
    }
    println!("\nforward after round trip bitwise identical: {bitwise}");
    println!("re-serialized bytes identical: {}", text == back.save()?);

    // bad documents are rejected with specific errors
    let truncated = &text[..text.len() / 2];
    println!(
        "truncated document: {:?}",
        Network::load(truncated).unwrap_err().to_string()
    );
    let wrong = text.replace("\"format_version\": 1", "\"format_version\": 2");
    println!(
        "future version:     {:?}",
        Network::load(&wrong).unwrap_err().to_string()
    );

    // parameter paths serialize in the same document family
    let path = ParamPath::new(
        StructureKind::Composition,
        vec![ParamSegment::dense(
            0.5,
            Matrix::identity(2),
            vec![0.1, 0.2],
            0.0,
        )?],
    )?;
    let path_text = save_path(&path)?;
    println!(
        "\npath document round trip equal: {}",
        load_path(&path_text)? == path
    );
    Ok(())
}
