use std::sync::OnceLock;

use rand::RngCore;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Detection, PerceptionError, Perceiver};
use crate::env::{EnvGraph, LandmarkId, NodeId};
use crate::geom::{rel_pos, RelPos};
use crate::http::{EndpointConfig, JsonEndpoint};
use crate::lm::{bind, render_prompt, TemplateId};

#[derive(Serialize)]
struct Question<'a> {
    image: &'a str,
    question: &'a str,
}

#[derive(Deserialize)]
struct Answer {
    answer: String,
}

/// Client for a vision endpoint answering free-text questions about one image.
#[derive(Debug)]
pub struct VisionClient {
    endpoint: JsonEndpoint,
}

impl VisionClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, PerceptionError> {
        Ok(VisionClient {
            endpoint: JsonEndpoint::new(cfg)?,
        })
    }

    pub fn ask(&self, image: &str, question: &str) -> Result<String, PerceptionError> {
        let a: Answer = self.endpoint.post(&Question { image, question })?;
        Ok(a.answer)
    }
}

/// Leading yes/no of an answer; `None` when it is neither.
pub fn parse_yes_no(answer: &str) -> Option<bool> {
    let t = answer.trim_start().to_ascii_lowercase();
    if t.starts_with("yes") {
        Some(true)
    } else if t.starts_with("no") {
        Some(false)
    } else {
        None
    }
}

/// First distance with a unit, normalized to meters: "about 1600 meters",
/// "roughly 1.6 km", "1,200m".
pub fn parse_distance_m(answer: &str) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(
            r"(?i)(\d+(?:,\d{3})*(?:\.\d+)?)\s*(kilomet(?:er|re)s?|km|met(?:er|re)s?|m)\b",
        )
        .expect("static regex")
    });
    let cap = re.captures(answer)?;
    let value: f64 = cap[1].replace(',', "").parse().ok()?;
    let unit = cap[2].to_ascii_lowercase();
    let scale = if unit.starts_with('k') { 1000.0 } else { 1.0 };
    Some(value * scale)
}

fn find_bbox(answer: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        let n = r"\s*-?\d+(?:\.\d+)?\s*";
        Regex::new(&format!(r"\(({n}),({n}),({n}),({n})\)")).expect("static regex")
    });
    re.find(answer).map(|m| m.as_str().to_string())
}

/// An image reference and the bearing its camera faces.
#[derive(Debug, Clone, PartialEq)]
pub struct StreetView {
    pub reference: String,
    pub bearing_deg: f64,
}

/// Runs the visible / bounding-box / distance question chain for every
/// (image, landmark) pair. A landmark is reported once, from the first image
/// that yields a distance. `true_positive` is left set; callers with ground
/// truth correct it.
pub fn remote_perceive(
    client: &VisionClient,
    images: &[StreetView],
    landmarks: &[(LandmarkId, String)],
) -> Result<Vec<Detection>, PerceptionError> {
    let mut out: Vec<Detection> = Vec::new();
    for (id, name) in landmarks {
        for view in images {
            if out.iter().any(|d| d.landmark == *id) {
                break;
            }
            let q = |t: TemplateId, b| render_prompt(t, &b).expect("perception bindings are complete");
            let seen = client.ask(
                &view.reference,
                &q(TemplateId::PerceptionVisible, bind([("landmark", name.as_str())])),
            )?;
            match parse_yes_no(&seen) {
                Some(true) => {}
                Some(false) => continue,
                None => {
                    log::warn!("unparseable visibility answer for {name} in {}: {seen:?}", view.reference);
                    continue;
                }
            }
            let bbox = match find_bbox(&seen) {
                Some(b) => b,
                None => {
                    let a = client.ask(
                        &view.reference,
                        &q(TemplateId::PerceptionBox, bind([("landmark", name.as_str())])),
                    )?;
                    find_bbox(&a).unwrap_or_else(|| {
                        log::warn!("no bounding box for {name} in {}: {a:?}", view.reference);
                        "(0, 0, 1, 1)".to_string()
                    })
                }
            };
            let far = client.ask(
                &view.reference,
                &q(
                    TemplateId::PerceptionDistance,
                    bind([("landmark", name.as_str()), ("bbox", bbox.as_str())]),
                ),
            )?;
            match parse_distance_m(&far) {
                Some(d) => out.push(Detection {
                    landmark: *id,
                    rel: RelPos::new(view.bearing_deg, d),
                    true_positive: true,
                }),
                None => log::warn!("unparseable distance for {name} in {}: {far:?}", view.reference),
            }
        }
    }
    Ok(out)
}

/// Perceiver backed by a [`VisionClient`]; camera bearings come from the
/// direction of the road each street view is aligned with.
#[derive(Debug)]
pub struct RemotePerceiver {
    client: VisionClient,
}

impl RemotePerceiver {
    pub fn new(client: VisionClient) -> Self {
        RemotePerceiver { client }
    }
}

impl Perceiver for RemotePerceiver {
    fn name(&self) -> &str {
        "remote"
    }

    fn perceive(
        &self,
        env: &EnvGraph,
        node: NodeId,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<Detection>, PerceptionError> {
        let n = env.node(node)?;
        let views: Vec<StreetView> = n
            .streetviews
            .iter()
            .zip(env.connections(node)?)
            .map(|(r, c)| StreetView {
                reference: r.clone(),
                bearing_deg: c.dir.center_deg(),
            })
            .collect();
        let names: Vec<(LandmarkId, String)> = env
            .landmarks()
            .iter()
            .map(|l| (l.id, l.name.clone()))
            .collect();
        let mut found = remote_perceive(&self.client, &views, &names)?;
        for d in &mut found {
            if let Some(lm) = env.landmark(d.landmark) {
                d.true_positive = rel_pos(n.coord, lm.coord).distance_m <= lm.visibility_radius_m;
            }
        }
        Ok(found)
    }
}
