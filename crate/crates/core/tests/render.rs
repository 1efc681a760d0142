use slotgnn::discriminator::SlotPrediction;
use slotgnn::harness::render::{LINE_COLOR, POINT_COLOR};
use slotgnn::harness::{render_overlay, write_ppm};
use slotgnn::scene::{generate_scene, Image, SceneConfig};
use slotgnn::MarkingPoint;
use tempfile::tempdir;

fn to_u8(c: [f32; 3]) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

fn gray(size: usize) -> Image {
    Image {
        width: size,
        height: size,
        data: vec![0.5; size * size * 3],
    }
}

#[test]
fn empty_overlay_only_reencodes() {
    let dir = tempdir().unwrap();
    let scene = generate_scene(&SceneConfig::default(), 4).unwrap();
    let (a, b) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
    write_ppm(&scene.image, &a).unwrap();
    render_overlay(&scene.image, &[], &[], &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn overlay_parses_and_carries_the_colors() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("o.ppm");
    let pred = SlotPrediction {
        x1: 0.25,
        y1: 0.5,
        x2: 0.75,
        y2: 0.5,
        t: 0.9,
    };
    render_overlay(&gray(256), &[], &[pred], &path).unwrap();
    let img = image::open(&path).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (256, 256));
    // middle of the segment is blue, the ring around an endpoint is red
    assert_eq!(img.get_pixel(128, 128).0, to_u8(LINE_COLOR));
    let ring = img.get_pixel(64, 128 - 5).0;
    assert_eq!(ring, to_u8(POINT_COLOR));
    // untouched far corner keeps the base gray
    assert_eq!(img.get_pixel(5, 250).0, [128, 128, 128]);
}

#[test]
fn border_coordinates_are_clamped() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("edge.ppm");
    let pred = SlotPrediction {
        x1: -0.2,
        y1: 0.0,
        x2: 1.0,
        y2: 1.3,
        t: 0.6,
    };
    let pts = [
        MarkingPoint::new(0.0, 1.0, 0.7),
        MarkingPoint::new(1.0, 0.0, 0.7),
    ];
    render_overlay(&gray(64), &pts, &[pred], &path).unwrap();
    let img = image::open(&path).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (64, 64));
}

#[test]
fn unwritable_path_is_an_io_error() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("missing").join("o.ppm");
    assert!(matches!(
        render_overlay(&gray(16), &[], &[], &path),
        Err(slotgnn::Error::Io(_))
    ));
}
