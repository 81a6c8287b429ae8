use quick_xml::events::Event;
use quick_xml::Reader;

use demix::bench::{run_experiment_with, ExperimentSpec};
use demix::par::Exec;
use demix::plot::{emit_svg, render_svg, PlotKind};

fn results() -> Vec<demix::bench::TrialResult> {
    let mut spec = ExperimentSpec::desk_scale();
    spec.p = 64;
    spec.b = 4;
    spec.s = 8;
    spec.sample_grid = vec![16, 32, 64, 96];
    spec.trials = 2;
    spec.max_iters = 100;
    run_experiment_with(&spec, Exec::Sequential).unwrap()
}

/// Parses `svg` to the end, returning the root element name and the number
/// of `polyline` elements.
fn parse(svg: &str) -> (String, usize) {
    let mut reader = Reader::from_str(svg);
    let mut root = None;
    let mut polylines = 0;
    let mut depth = 0i32;
    loop {
        match reader.read_event().expect("well-formed XML") {
            Event::Start(e) => {
                depth += 1;
                root.get_or_insert_with(|| e.name().0.to_string());
            }
            Event::End(_) => depth -= 1,
            Event::Empty(e) => {
                if e.name().0 == "polyline" {
                    polylines += 1;
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    assert_eq!(depth, 0, "unbalanced elements");
    (root.expect("root element"), polylines)
}

#[test]
fn plots_are_well_formed_svg_with_one_line_per_solver() {
    let r = results();
    for kind in [PlotKind::Success, PlotKind::Error] {
        let svg = render_svg(&r, kind, 0.05).unwrap();
        let (root, polylines) = parse(&svg);
        assert_eq!(root, "svg");
        assert_eq!(polylines, 3);
        assert!(svg.contains(r#"version="1.1""#));
    }
}

#[test]
fn re_emission_is_byte_identical() {
    let r = results();
    let dir = std::env::temp_dir().join(format!("demix-svg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let (a, b) = (dir.join("a.svg"), dir.join("b.svg"));
    emit_svg(&r, &a, PlotKind::Error, 0.05).unwrap();
    emit_svg(&r, &b, PlotKind::Error, 0.05).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn unwritable_path_is_an_io_error() {
    let r = results();
    let err = emit_svg(&r, std::path::Path::new("/nonexistent-dir/x.svg"), PlotKind::Success, 0.05).unwrap_err();
    assert!(matches!(err, demix::DemixError::Io { .. }));
}
