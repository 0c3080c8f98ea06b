mod common;

use std::fs;

use common::{golden_dir, GoldenFixture};
use optpick::prompt::{render_template, TemplateId};

#[test]
fn every_template_matches_its_golden_file() {
    let fixture = GoldenFixture::new();
    let input = fixture.input();
    let mut diffs = Vec::new();
    for id in TemplateId::ALL {
        let want = fs::read_to_string(golden_dir().join(format!("{id}.txt"))).unwrap();
        let got = render_template(id, &input).unwrap();
        if got != want {
            diffs.push(format!("{id}:\n--- want\n{want:?}\n--- got\n{got:?}"));
        }
    }
    assert!(diffs.is_empty(), "{}", diffs.join("\n"));
}

#[test]
fn no_placeholder_survives() {
    for id in TemplateId::ALL {
        let text = fs::read_to_string(golden_dir().join(format!("{id}.txt"))).unwrap();
        for p in ["{text}", "{options}", "{top_k}", "{label1}", "{label2}", "{explain}"] {
            assert!(!text.contains(p), "{id} contains {p}");
        }
    }
}
