use std::fmt::Write as _;

use crate::dataset::GroundingSample;
use crate::geometry::PixelBox;

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn rect(out: &mut String, class: &str, stroke: &str, b: &PixelBox) {
    let _ = writeln!(
        out,
        r#"  <rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
        b.x_left,
        b.y_top,
        b.width(),
        b.height()
    );
}

/// SVG overlay of the ground-truth box (white) and optional prediction (gray)
/// on top of the referenced image. The image is linked, not embedded.
pub fn render_overlay(s: &GroundingSample, predicted: Option<&PixelBox>) -> String {
    let (w, h) = (s.image_width, s.image_height);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, "  <title>{}: {}</title>", xml_escape(&s.sample_id), xml_escape(&s.phrase));
    let href = xml_escape(&s.image_ref);
    let _ = writeln!(
        out,
        r#"  <image href="{href}" xlink:href="{href}" x="0" y="0" width="{w}" height="{h}"/>"#
    );
    rect(&mut out, "ground-truth", "white", &s.gt_box);
    if let Some(p) = predicted {
        rect(&mut out, "prediction", "gray", p);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Category;

    fn sample() -> GroundingSample {
        GroundingSample {
            sample_id: "s<1>".into(),
            patient_id: "p".into(),
            image_ref: "img/a&b.png".into(),
            image_width: 1024,
            image_height: 768,
            category: Category::Pneumothorax,
            phrase: "small right apical pneumothorax".into(),
            gt_box: PixelBox::new(10.5, 20.0, 110.5, 220.25).unwrap(),
        }
    }

    fn attr(tag: &str, name: &str) -> f64 {
        let key = format!(" {name}=\"");
        let start = tag.find(&key).unwrap() + key.len();
        let end = start + tag[start..].find('"').unwrap();
        tag[start..end].parse().unwrap()
    }

    #[test]
    fn two_rects_with_prediction() {
        let pred = PixelBox::new(0.0, 0.0, 307.2, 384.0).unwrap();
        let svg = render_overlay(&sample(), Some(&pred));
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains(r#"width="1024" height="768""#));
        assert!(svg.contains("img/a&amp;b.png"));
        assert!(svg.contains("s&lt;1&gt;"));
        let gt = svg.lines().find(|l| l.contains("ground-truth")).unwrap();
        assert!(gt.contains(r#"stroke="white""#));
        assert_eq!(attr(gt, "x"), 10.5);
        assert_eq!(attr(gt, "y"), 20.0);
        assert_eq!(attr(gt, "width"), 100.0);
        assert_eq!(attr(gt, "height"), 200.25);
        let p = svg.lines().find(|l| l.contains("\"prediction\"")).unwrap();
        assert!(p.contains(r#"stroke="gray""#));
        assert_eq!(attr(p, "width"), 307.2);
    }

    #[test]
    fn one_rect_without_prediction() {
        let svg = render_overlay(&sample(), None);
        assert_eq!(svg.matches("<rect").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }
}
