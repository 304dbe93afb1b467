//! Seeded synthetic screencast generator: renders labeled single-action
//! fragments and multi-action screencasts with ground-truth boundaries.
//! Everything is integer-rasterized and derived from explicit seeds, so
//! generated bytes are identical across runs and platforms.

pub mod canvas;
pub mod scene;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{Frame, FrameSequence};
use crate::model::{CommandClass, StructuredAction, WidgetClass};
use crate::vision::BBox;
pub use canvas::Canvas;
pub use scene::{render, SceneSpec, SceneState, Transient, WidgetSpec, Zone};

/// Which widget classes each command may target. Shipped as data so tests
/// and tools can audit the pairing rules.
pub const COMPATIBILITY: [(CommandClass, &[WidgetClass]); 11] = [
    (CommandClass::Click, &[
        WidgetClass::Button,
        WidgetClass::Checkbox,
        WidgetClass::Dropdown,
        WidgetClass::Icon,
        WidgetClass::Tab,
    ]),
    (CommandClass::Drag, &[WidgetClass::Icon, WidgetClass::Image, WidgetClass::Others]),
    (CommandClass::Hover, &[
        WidgetClass::Button,
        WidgetClass::Icon,
        WidgetClass::Image,
        WidgetClass::Text,
        WidgetClass::Tab,
    ]),
    (CommandClass::ScrollDown, &[WidgetClass::Page]),
    (CommandClass::ScrollUp, &[WidgetClass::Page]),
    (CommandClass::Select, &[WidgetClass::Text]),
    (CommandClass::Type, &[WidgetClass::Text]),
    (CommandClass::ZoomIn, &[WidgetClass::Image, WidgetClass::Page]),
    (CommandClass::ZoomOut, &[WidgetClass::Image, WidgetClass::Page]),
    (CommandClass::Appear, &[WidgetClass::Popup, WidgetClass::Window, WidgetClass::Dropdown]),
    (CommandClass::Disappear, &[WidgetClass::Popup, WidgetClass::Window, WidgetClass::Dropdown]),
];

pub fn compatible(command: CommandClass, widget: WidgetClass) -> bool {
    COMPATIBILITY
        .iter()
        .find(|(c, _)| *c == command)
        .map(|(_, ws)| ws.contains(&widget))
        .unwrap_or(false)
}

/// One action to render against a scene.
#[derive(Clone, Debug)]
pub struct ActionSpec {
    pub command: CommandClass,
    /// Target widget id in the scene inventory.
    pub target: usize,
    /// Total fragment frames including the settled first frame.
    pub duration: usize,
}

/// Draws a duration for a command; fragment lengths land in 2..=8 frames
/// with an overall mean near 5 (one second at 5 fps).
pub fn sample_duration(command: CommandClass, rng: &mut ChaCha8Rng) -> usize {
    let (lo, hi) = match command {
        CommandClass::Click => (3, 8),
        CommandClass::Drag => (3, 5),
        CommandClass::Hover => (4, 8),
        CommandClass::Type => (2, 4),
        CommandClass::Select => (3, 5),
        CommandClass::Appear | CommandClass::Disappear => (2, 6),
        _ => (3, 7),
    };
    rng.gen_range(lo..=hi)
}

fn center(b: &BBox) -> (i32, i32) {
    (
        b.x as i32 + b.w as i32 / 2,
        b.y as i32 + b.h as i32 / 2,
    )
}

/// Cursor positions for `steps` frames: linear approach reaching `to` in
/// at most `steps` frames, moving at least `speed` px per frame when the
/// distance allows, then holding.
fn travel(from: (i32, i32), to: (i32, i32), steps: usize, speed: i32) -> Vec<(i32, i32)> {
    let dist = (to.0 - from.0).abs().max((to.1 - from.1).abs());
    let arrive = ((dist + speed - 1) / speed.max(1)).clamp(1, steps as i32);
    (1..=steps as i32)
        .map(|k| {
            let t = k.min(arrive);
            (
                from.0 + (to.0 - from.0) * t / arrive,
                from.1 + (to.1 - from.1) * t / arrive,
            )
        })
        .collect()
}


/// Post-action pointer rest position: just outside the target box so the
/// settled frame shows the widget unobstructed.
fn rest_beside(spec: &SceneSpec, b: &BBox) -> (i32, i32) {
    let mut x = (b.x + b.w) as i32 + 8;
    let mut y = (b.y + b.h) as i32 + 7;
    if x > spec.width as i32 - 7 {
        x = b.x as i32 - 9;
    }
    if y > spec.height as i32 - 7 {
        y = b.y as i32 - 8;
    }
    (
        x.clamp(6, spec.width as i32 - 7),
        y.clamp(6, spec.height as i32 - 7),
    )
}

const WIGGLE: [(i32, i32); 4] = [(10, 0), (0, 10), (-10, 0), (0, -10)];

/// Renders one action: the settled pre-state frame followed by
/// `duration - 1` animated frames. The state is left at the settled
/// post-action configuration.
pub fn render_action(
    spec: &SceneSpec,
    state: &mut SceneState,
    action: &ActionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Canvas>, StructuredAction)> {
    let widget = spec.widget(action.target);
    if !compatible(action.command, widget.class) {
        return Err(Error::IncompatiblePair {
            command: action.command.label().to_string(),
            widget: widget.class.label().to_string(),
        });
    }
    assert!(action.duration >= 2, "duration must be >= 2");
    let mut frames = vec![render(spec, state, &Transient::default())];
    frames.extend(animate(spec, state, action, rng));
    let label = StructuredAction {
        command: action.command,
        widget: widget.class,
        location: widget.location.clone(),
    };
    Ok((frames, label))
}

/// The animated frames (excluding the settled pre-state). Mutates the
/// state to the post-action configuration.
pub fn animate(
    spec: &SceneSpec,
    state: &mut SceneState,
    action: &ActionSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<Canvas> {
    let steps = action.duration - 1;
    let id = action.target;
    let target_box = state.bbox[id];
    let tcenter = center(&target_box);
    let mut frames = Vec::with_capacity(steps);
    match action.command {
        CommandClass::Click => {
            let path = travel(state.cursor, tcenter, steps, 11);
            let arrived = path.iter().position(|&p| p == tcenter).unwrap_or(steps - 1);
            let new_pressed = !state.pressed[id];
            for (t, &pos) in path.iter().enumerate() {
                let mut st = state.clone();
                st.cursor = pos;
                let mut tr = Transient::default();
                // Expanding ripple ring once the cursor arrives.
                if t >= arrived {
                    let k = (t - arrived) as i32;
                    tr.press_blend = Some((id, if k % 2 == 0 { 80 } else { 12 }));
                }
                if t == steps - 1 {
                    st.pressed[id] = new_pressed;
                    if spec.widget(id).class == WidgetClass::Checkbox {
                        st.checked[id] = !state.checked[id];
                    }
                    if spec.widget(id).class == WidgetClass::Tab {
                        let tabs: Vec<usize> = spec
                            .widgets
                            .iter()
                            .filter(|w| w.class == WidgetClass::Tab)
                            .map(|w| w.id)
                            .collect();
                        if let Some(k) = tabs.iter().position(|&x| x == id) {
                            st.active_tab = k;
                        }
                    }
                    tr.press_blend = None;
                    // Rest beside the target so the new widget state shows.
                    st.cursor = rest_beside(spec, &target_box);
                }
                let mut frame = render(spec, &st, &tr);
                if t >= arrived && t < steps - 1 {
                    draw_ripple(&mut frame, tcenter, 6 + 4 * (t - arrived) as i32, spec);
                }
                frames.push(frame);
                if t == steps - 1 {
                    *state = st;
                }
            }
        }
        CommandClass::Hover => {
            let path = travel(state.cursor, tcenter, steps, 11);
            let arrived = path.iter().position(|&p| p == tcenter).unwrap_or(0);
            let tip = tooltip_box(spec, &target_box);
            for t in 0..steps {
                let mut st = state.clone();
                let mut tr = Transient::default();
                if t <= arrived || t == steps - 1 {
                    st.cursor = if t == steps - 1 {
                        rest_beside(spec, &target_box)
                    } else {
                        path[t]
                    };
                } else {
                    // Wiggle around the target while the tooltip shows.
                    let w = WIGGLE[(t - arrived - 1) % 4];
                    st.cursor = (tcenter.0 + w.0, tcenter.1 + w.1);
                    tr.tooltip = Some(tip);
                }
                frames.push(render(spec, &st, &tr));
                if t == steps - 1 {
                    *state = st;
                }
            }
        }
        CommandClass::Drag => {
            let step_px = rng.gen_range(8..11) as i32;
            let delta = drag_delta(spec, state, id, steps as i32, step_px, rng);
            for t in 1..=steps {
                let mut st = state.clone();
                let b = state.bbox[id];
                let nx = (b.x as i32 + delta.0 * t as i32 / steps as i32).max(0) as u32;
                let ny = (b.y as i32 + delta.1 * t as i32 / steps as i32).max(0) as u32;
                st.bbox[id] = BBox { x: nx, y: ny, w: b.w, h: b.h };
                st.cursor = if t == steps {
                    rest_beside(spec, &st.bbox[id])
                } else {
                    center(&st.bbox[id])
                };
                frames.push(render(spec, &st, &Transient::default()));
                if t == steps {
                    *state = st;
                }
            }
        }
        CommandClass::ScrollDown | CommandClass::ScrollUp => {
            let dir = if action.command == CommandClass::ScrollDown { -1 } else { 1 };
            let step = rng.gen_range(3..5) as i32;
            for t in 1..=steps {
                let mut st = state.clone();
                st.content_offset += dir * step * t as i32;
                st.cursor = center(&spec.content);
                frames.push(render(spec, &st, &Transient::default()));
                if t == steps {
                    *state = st;
                }
            }
        }
        CommandClass::Select => {
            let b = target_box;
            let full = b.w as i32 - 2;
            for t in 1..=steps {
                let mut st = state.clone();
                st.selected_cols[id] = (full * t as i32 / steps as i32).max(1);
                st.cursor = if t == steps {
                    rest_beside(spec, &b)
                } else {
                    (
                        b.x as i32 + 1 + st.selected_cols[id].min(full),
                        b.y as i32 + b.h as i32 / 2,
                    )
                };
                frames.push(render(spec, &st, &Transient::default()));
                if t == steps {
                    *state = st;
                }
            }
        }
        CommandClass::Type => {
            let b = target_box;
            let cap = ((b.w as i32 - 8) / 4).max(3);
            // Text length walks up and down by three glyphs per frame,
            // bouncing at the field bounds (deletes count as typing).
            let mut glyphs = state.glyphs[id];
            let mut dir = if glyphs + 3 > cap { -1 } else { 1 };
            for t in 1..=steps {
                let mut st = state.clone();
                st.selected_cols[id] = 0;
                let next = glyphs + 3 * dir;
                glyphs = if next > cap {
                    dir = -1;
                    glyphs - 3
                } else if next < 0 {
                    dir = 1;
                    glyphs + 3
                } else {
                    next
                }
                .clamp(0, cap);
                st.glyphs[id] = glyphs;
                // The pointer tracks the insertion caret.
                let caret_x = (b.x as i32 + 2 + glyphs * 4).min((b.x + b.w) as i32 - 3);
                st.cursor = if t == steps {
                    rest_beside(spec, &b)
                } else {
                    (caret_x, b.y as i32 + b.h as i32 / 2)
                };
                frames.push(render(spec, &st, &Transient::default()));
                if t == steps {
                    *state = st;
                }
            }
        }
        CommandClass::ZoomIn | CommandClass::ZoomOut => {
            let dir = if action.command == CommandClass::ZoomIn { 1 } else { -1 };
            let is_image = spec.widget(id).class == WidgetClass::Image;
            // Reset to the opposite bound when there is no headroom.
            let (cur, lo, hi) = if is_image {
                (state.image_spacing_delta[id], -2, 6)
            } else {
                (state.content_spacing_delta, -3, 7)
            };
            let start = if dir > 0 && cur + steps as i32 > hi {
                lo
            } else if dir < 0 && cur - (steps as i32) < lo {
                hi
            } else {
                cur
            };
            for t in 1..=steps {
                let mut st = state.clone();
                let v = start + dir * t as i32;
                if is_image {
                    st.image_spacing_delta[id] = v;
                } else {
                    st.content_spacing_delta = v;
                }
                // Pointer jitters over the zoom target (wheel zooming).
                let w = if t == steps { (0, 0) } else { WIGGLE[t % 4] };
                st.cursor = (tcenter.0 + w.0, tcenter.1 + w.1);
                frames.push(render(spec, &st, &Transient::default()));
                if t == steps {
                    *state = st;
                }
            }
        }
        CommandClass::Appear | CommandClass::Disappear => {
            let appearing = action.command == CommandClass::Appear;
            for t in 1..=steps {
                let mut st = state.clone();
                st.visible[id] = false;
                let frac = if appearing { t } else { steps - t } as i32;
                // Sizes ramp between ~45% and 100% so even the smallest
                // drawn overlay moves the dissimilarity series.
                let tr = Transient {
                    partial_overlay: (frac > 0)
                        .then_some((id, 55 * steps as i32 + 45 * frac, 100 * steps as i32)),
                    ..Transient::default()
                };
                frames.push(render(spec, &st, &tr));
                if t == steps {
                    st.visible[id] = appearing;
                    *state = st;
                }
            }
        }
    }
    frames
}

fn draw_ripple(frame: &mut Canvas, c: (i32, i32), r: i32, spec: &SceneSpec) {
    for dy in -r - 1..=r + 1 {
        for dx in -r - 1..=r + 1 {
            let d2 = dx * dx + dy * dy;
            if (d2 - r * r).abs() <= r {
                frame.put(c.0 + dx, c.1 + dy, spec.theme.accent);
            }
        }
    }
}

fn tooltip_box(spec: &SceneSpec, target: &BBox) -> BBox {
    let w = 18u32;
    let h = 8u32;
    let x = (target.x + target.w / 2)
        .saturating_sub(w / 2)
        .clamp(1, spec.width - w - 1);
    let y = if target.y > h + 2 { target.y - h - 1 } else { target.y + target.h + 1 };
    BBox { x, y: y.min(spec.height - h - 1), w, h }
}

/// A displacement of at least 6 px per frame that keeps the dragged
/// widget inside the content area, preferring directions clear of other
/// widgets.
fn drag_delta(
    spec: &SceneSpec,
    state: &SceneState,
    id: usize,
    steps: i32,
    step_px: i32,
    rng: &mut ChaCha8Rng,
) -> (i32, i32) {
    let dirs = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)];
    let start = rng.gen_range(0..dirs.len());
    let b = state.bbox[id];
    let area = spec.content;
    let magnitude = steps * step_px;
    let in_bounds = |mx: i32, my: i32| {
        let nx = b.x as i32 + mx;
        let ny = b.y as i32 + my;
        nx >= area.x as i32 + 1
            && ny >= area.y as i32 + 1
            && nx + b.w as i32 <= (area.x + area.w) as i32 - 1
            && ny + b.h as i32 <= (area.y + area.h) as i32 - 1
    };
    // First pass avoids other widgets; second pass only stays in bounds
    // (overdraw is harmless, the scene is re-rendered per frame).
    for check_widgets in [true, false] {
        for mag in [magnitude, magnitude * 3 / 4, 6 * steps] {
            let mag = mag.max(6 * steps);
            for k in 0..dirs.len() {
                let (dx, dy) = dirs[(start + k) % dirs.len()];
                let (mx, my) = (dx * mag, dy * mag);
                if !in_bounds(mx, my) {
                    continue;
                }
                if check_widgets {
                    let candidate = BBox {
                        x: (b.x as i32 + mx) as u32,
                        y: (b.y as i32 + my) as u32,
                        w: b.w,
                        h: b.h,
                    };
                    let clear = spec
                        .visible_widgets(state)
                        .filter(|(w, _)| {
                            w.id != id
                                && w.class != WidgetClass::Page
                                && w.class != WidgetClass::Window
                        })
                        .all(|(_, other)| !dilate(&candidate, 2, spec).intersects(&other));
                    if !clear {
                        continue;
                    }
                }
                return (mx, my);
            }
        }
    }
    (0, 6 * steps)
}

fn dilate(b: &BBox, by: u32, spec: &SceneSpec) -> BBox {
    let x = b.x.saturating_sub(by);
    let y = b.y.saturating_sub(by);
    BBox {
        x,
        y,
        w: (b.w + 2 * by).min(spec.width - x),
        h: (b.h + 2 * by).min(spec.height - y),
    }
}

/// Manifest line for one generated fragment.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub frame_dir: String,
    pub command: String,
    pub widget: String,
    pub location: String,
    pub start: usize,
    pub end: usize,
    pub scene_seed: u64,
}

impl ManifestEntry {
    pub fn action(&self) -> Result<StructuredAction> {
        Ok(StructuredAction {
            command: CommandClass::parse(&self.command)
                .ok_or_else(|| Error::Format(format!("unknown command {:?}", self.command)))?,
            widget: WidgetClass::parse(&self.widget)
                .ok_or_else(|| Error::Format(format!("unknown widget {:?}", self.widget)))?,
            location: self.location.split_whitespace().map(str::to_string).collect(),
        })
    }
}

fn fragment_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xA5A5_5A5A_1234_4321
}

/// Picks a compatible visible target for a command, avoiding targets and
/// effect areas occluded by visible overlays.
fn pick_target(
    spec: &SceneSpec,
    state: &SceneState,
    command: CommandClass,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let overlays: Vec<BBox> = spec
        .widgets
        .iter()
        .filter(|w| w.zone == Zone::Overlay && state.visible[w.id])
        .map(|w| state.bbox[w.id])
        .collect();
    let mut candidates: Vec<usize> = Vec::new();
    for w in &spec.widgets {
        if !compatible(command, w.class) {
            continue;
        }
        let is_overlay = w.zone == Zone::Overlay;
        match command {
            CommandClass::Appear => {
                if is_overlay
                    && !state.visible[w.id]
                    && overlays.iter().all(|o| !state.bbox[w.id].intersects(o))
                {
                    candidates.push(w.id);
                }
            }
            CommandClass::Disappear => {
                if is_overlay && state.visible[w.id] {
                    candidates.push(w.id);
                }
            }
            _ => {
                if is_overlay || !state.visible[w.id] {
                    continue;
                }
                // The effect area must not be hidden under an overlay.
                let effect = match command {
                    CommandClass::ScrollDown
                    | CommandClass::ScrollUp => spec.content,
                    CommandClass::ZoomIn | CommandClass::ZoomOut
                        if w.class == WidgetClass::Page =>
                    {
                        spec.content
                    }
                    _ => dilate(&state.bbox[w.id], 3, spec),
                };
                if overlays.iter().all(|o| !effect.intersects(o)) {
                    candidates.push(w.id);
                }
            }
        }
    }
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

fn provenance_line(kind: &str, seed: u64, extra: &[(&str, String)]) -> String {
    let mut obj = serde_json::Map::new();
    let mut prov = serde_json::Map::new();
    prov.insert("tool".into(), "actioncast".into());
    prov.insert("version".into(), crate::VERSION.into());
    prov.insert("kind".into(), kind.into());
    prov.insert("seed".into(), seed.into());
    for (k, v) in extra {
        prov.insert((*k).into(), v.clone().into());
    }
    obj.insert("provenance".into(), serde_json::Value::Object(prov));
    serde_json::Value::Object(obj).to_string()
}

/// Generates `n` labeled single-action fragments under `out`: PNG frame
/// directories plus a JSONL manifest (provenance line first). Byte-
/// identical for identical arguments.
pub fn generate_dataset(out: &Path, seed: u64, n: usize, canvas: u32) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut lines = Vec::with_capacity(n + 1);
    lines.push(provenance_line(
        "dataset",
        seed,
        &[("fragments", n.to_string()), ("canvas", canvas.to_string())],
    ));
    for i in 0..n {
        let scene_seed = fragment_seed(seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
        let spec = SceneSpec::generate(scene_seed, canvas, canvas);
        let mut state = spec.initial_state(&mut rng);
        let command = CommandClass::ALL[i % CommandClass::COUNT];
        if command == CommandClass::Disappear {
            // Pre-show one overlay so there is something to dismiss.
            let overlay = spec
                .widgets
                .iter()
                .find(|w| w.zone == Zone::Overlay)
                .map(|w| w.id)
                .unwrap();
            state.visible[overlay] = true;
        }
        let target = pick_target(&spec, &state, command, &mut rng)
            .ok_or_else(|| Error::Format(format!("no target for {command} in scene {scene_seed}")))?;
        let duration = sample_duration(command, &mut rng);
        let action = ActionSpec { command, target, duration };
        let (frames, label) = render_action(&spec, &mut state, &action, &mut rng)?;
        let id = format!("frag_{i:05}");
        let dir = out.join("frames").join(&id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (k, frame) in frames.iter().enumerate() {
            crate::raster::write_rgb_png(
                &dir.join(format!("{k:04}.png")),
                &frame.pixels,
                frame.w,
                frame.h,
            )?;
        }
        let entry = ManifestEntry {
            id: id.clone(),
            frame_dir: format!("frames/{id}"),
            command: label.command.label().to_string(),
            widget: label.widget.label().to_string(),
            location: label.location.join(" "),
            start: 0,
            end: frames.len() - 1,
            scene_seed,
        };
        lines.push(serde_json::to_string(&entry).expect("manifest entry serializes"));
    }
    let manifest = out.join("manifest.jsonl");
    std::fs::write(&manifest, lines.join("\n") + "\n").map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// Parses manifest text: optional provenance line followed by entries.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 && line.contains("\"provenance\"") {
            serde_json::from_str::<serde_json::Value>(line)
                .map_err(|e| Error::Format(format!("manifest provenance: {e}")))?;
            continue;
        }
        out.push(
            serde_json::from_str::<ManifestEntry>(line)
                .map_err(|e| Error::Format(format!("manifest line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

/// Ground truth for one action inside a generated screencast.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GtWindow {
    /// First and last animated frame index (inclusive).
    pub start: usize,
    pub end: usize,
    pub command: String,
    pub widget: String,
    pub location: String,
    pub target_id: usize,
    pub target_bbox: BBox,
}

impl GtWindow {
    pub fn action(&self) -> StructuredAction {
        StructuredAction {
            command: CommandClass::parse(&self.command).expect("gt command"),
            widget: WidgetClass::parse(&self.widget).expect("gt widget"),
            location: self.location.split_whitespace().map(str::to_string).collect(),
        }
    }
}

/// A multi-action screencast: actions separated by 3-5 static frames,
/// with ground-truth windows over the animated frames.
pub fn generate_screencast(
    seed: u64,
    n_actions: usize,
    canvas: u32,
) -> Result<(FrameSequence, Vec<GtWindow>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5C4EE);
    let spec = SceneSpec::generate(seed, canvas, canvas);
    let mut state = spec.initial_state(&mut rng);
    let mut frames: Vec<Canvas> = Vec::new();
    let settled = render(&spec, &state, &Transient::default());
    frames.push(settled.clone());
    frames.push(settled);
    let mut gts = Vec::with_capacity(n_actions);
    for _ in 0..n_actions {
        let (command, target) = loop {
            let command = CommandClass::ALL[rng.gen_range(0..CommandClass::COUNT)];
            if let Some(target) = pick_target(&spec, &state, command, &mut rng) {
                break (command, target);
            }
        };
        let duration = sample_duration(command, &mut rng);
        let action = ActionSpec { command, target, duration };
        let start = frames.len();
        frames.extend(animate(&spec, &mut state, &action, &mut rng));
        let end = frames.len() - 1;
        let w = spec.widget(target);
        gts.push(GtWindow {
            start,
            end,
            command: command.label().to_string(),
            widget: w.class.label().to_string(),
            location: w.location.join(" "),
            target_id: target,
            target_bbox: state.bbox[target],
        });
        let gap = rng.gen_range(3..6);
        let settled = render(&spec, &state, &Transient::default());
        for _ in 0..gap {
            frames.push(settled.clone());
        }
    }
    let frames: Vec<Frame> = frames
        .iter()
        .enumerate()
        .map(|(i, c)| c.to_frame(i, i as u64 * 200))
        .collect();
    Ok((
        FrameSequence {
            frames,
            source_id: format!("screencast_{seed}"),
        },
        gts,
    ))
}

/// Writes a screencast to disk: PNG frames plus `ground_truth.jsonl`.
pub fn write_screencast(
    out: &Path,
    seed: u64,
    seq: &FrameSequence,
    gts: &[GtWindow],
) -> Result<()> {
    let dir = out.join("frames");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for f in &seq.frames {
        crate::raster::write_rgb_png(
            &dir.join(format!("{:04}.png", f.index)),
            &f.pixels,
            f.width,
            f.height,
        )?;
    }
    let mut lines = vec![provenance_line(
        "screencast",
        seed,
        &[("actions", gts.len().to_string())],
    )];
    for gt in gts {
        lines.push(serde_json::to_string(gt).expect("gt serializes"));
    }
    let path = out.join("ground_truth.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::dissim_series;
    use crate::vision::SsimConfig;

    fn spec_and_state(seed: u64) -> (SceneSpec, SceneState, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = SceneSpec::generate(seed, 96, 96);
        let state = spec.initial_state(&mut rng);
        (spec, state, rng)
    }

    fn find(spec: &SceneSpec, class: WidgetClass) -> usize {
        spec.widgets.iter().find(|w| w.class == class).unwrap().id
    }

    #[test]
    fn compatibility_covers_every_class() {
        for (cmd, widgets) in COMPATIBILITY {
            assert!(!widgets.is_empty(), "{cmd} has no targets");
        }
        for cmd in CommandClass::ALL {
            assert!(COMPATIBILITY.iter().any(|(c, _)| *c == cmd));
        }
        for widget in WidgetClass::ALL {
            assert!(
                COMPATIBILITY.iter().any(|(_, ws)| ws.contains(&widget)),
                "{widget} never targeted"
            );
        }
        assert!(!compatible(CommandClass::Type, WidgetClass::Button));
        assert!(!compatible(CommandClass::Click, WidgetClass::Text));
    }

    #[test]
    fn incompatible_pair_is_rejected() {
        let (spec, mut state, mut rng) = spec_and_state(5);
        let action = ActionSpec {
            command: CommandClass::Type,
            target: find(&spec, WidgetClass::Button),
            duration: 4,
        };
        assert!(render_action(&spec, &mut state, &action, &mut rng).is_err());
    }

    #[test]
    fn click_changes_stay_near_button_and_cursor_start() {
        let (spec, mut state, mut rng) = spec_and_state(11);
        let id = find(&spec, WidgetClass::Button);
        state.cursor = (80, 80);
        let start_cursor = state.cursor;
        let action = ActionSpec { command: CommandClass::Click, target: id, duration: 6 };
        let (frames, label) = render_action(&spec, &mut state, &action, &mut rng).unwrap();
        assert_eq!(label.command, CommandClass::Click);
        assert_eq!(label.widget, WidgetClass::Button);
        let first = &frames[0];
        let last = frames.last().unwrap();
        let b = spec.widget(id).bbox;
        // The cursor rests up to 8 px beside the target after the click.
        let r = scene::CURSOR_RADIUS + 11;
        for y in 0..96i32 {
            for x in 0..96i32 {
                if first.get(x as u32, y as u32) == last.get(x as u32, y as u32) {
                    continue;
                }
                let near_button = x >= b.x as i32 - r
                    && x < (b.x + b.w) as i32 + r
                    && y >= b.y as i32 - r
                    && y < (b.y + b.h) as i32 + r;
                let near_start = (x - start_cursor.0).abs() <= r + 1
                    && (y - start_cursor.1).abs() <= r + 1;
                assert!(
                    near_button || near_start,
                    "unexpected diff at ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn appear_popup_absent_then_present() {
        let (spec, mut state, mut rng) = spec_and_state(21);
        let id = find(&spec, WidgetClass::Popup);
        // Park the cursor away from the popup so pixel probes see the popup.
        state.cursor = (88, 88);
        let action = ActionSpec { command: CommandClass::Appear, target: id, duration: 5 };
        let (frames, label) = render_action(&spec, &mut state, &action, &mut rng).unwrap();
        assert_eq!(label.widget, WidgetClass::Popup);
        assert!(state.visible[id]);
        let b = spec.widget(id).bbox;
        // The popup interior differs between first and last frame.
        let first = &frames[0];
        let last = frames.last().unwrap();
        let c = (b.x + b.w / 2, b.y + b.h / 2);
        assert_ne!(first.get(c.0, c.1), last.get(c.0, c.1));
    }

    #[test]
    fn durations_cover_two_to_eight_with_mean_near_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sum = 0usize;
        let mut count = 0usize;
        for cmd in CommandClass::ALL {
            for _ in 0..400 {
                let d = sample_duration(cmd, &mut rng);
                assert!((2..=8).contains(&d), "{cmd}: {d}");
                sum += d;
                count += 1;
            }
        }
        let mean = sum as f64 / count as f64;
        assert!((4.2..=5.8).contains(&mean), "mean duration {mean}");
    }

    #[test]
    fn every_animated_pair_clears_the_segment_threshold() {
        // Each in-action adjacent pair must exceed the default activity
        // threshold or the segmenter would split actions apart.
        let cfg = SsimConfig::default();
        let mut worst = f64::INFINITY;
        for seed in 0..6u64 {
            let (spec, mut state, mut rng) = spec_and_state(seed);
            for (i, cmd) in CommandClass::ALL.iter().enumerate() {
                if *cmd == CommandClass::Disappear {
                    let ov = spec.widgets.iter().find(|w| w.zone == Zone::Overlay).unwrap().id;
                    if !state.visible[ov] {
                        state.visible[ov] = true;
                    }
                }
                let Some(target) = pick_target(&spec, &state, *cmd, &mut rng) else {
                    continue;
                };
                let duration = 2 + (seed as usize + i) % 5;
                let action = ActionSpec { command: *cmd, target, duration: duration.max(3) };
                let (frames, _) = render_action(&spec, &mut state, &action, &mut rng).unwrap();
                let seq = FrameSequence {
                    frames: frames
                        .iter()
                        .enumerate()
                        .map(|(k, c)| c.to_frame(k, 0))
                        .collect(),
                    source_id: "t".into(),
                };
                let series = dissim_series(&seq, &cfg).unwrap();
                for (p, v) in series.iter().enumerate() {
                    worst = worst.min(*v);
                    assert!(
                        *v > 0.01,
                        "{cmd} seed {seed} pair {p}: dissim {v:.5} below threshold"
                    );
                }
            }
        }
        eprintln!("worst in-action pair dissimilarity: {worst:.5}");
    }

    #[test]
    fn dataset_is_balanced_and_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let m_a = generate_dataset(dir_a.path(), 77, 33, 96).unwrap();
        let m_b = generate_dataset(dir_b.path(), 77, 33, 96).unwrap();
        let bytes_a = std::fs::read(&m_a).unwrap();
        let bytes_b = std::fs::read(&m_b).unwrap();
        assert_eq!(bytes_a, bytes_b, "same seed must give identical manifests");

        let entries = read_manifest(&m_a).unwrap();
        assert_eq!(entries.len(), 33);
        let mut counts = std::collections::HashMap::new();
        for e in &entries {
            *counts.entry(e.command.clone()).or_insert(0usize) += 1;
            let action = e.action().unwrap();
            assert!(compatible(action.command, action.widget), "{e:?}");
            assert!(!action.location.is_empty());
            // Frames exist on disk and decode.
            let dir = dir_a.path().join(&e.frame_dir);
            let seq = crate::ingest::load_frames(&dir, &Default::default()).unwrap();
            assert_eq!(seq.len(), e.end - e.start + 1);
            assert!(seq.len() >= 2);
        }
        // Round-robin command balance: 33 fragments over 11 commands.
        assert!(counts.values().all(|&c| c == 3), "{counts:?}");

        // A different seed changes the rendered bytes.
        let dir_c = tempfile::tempdir().unwrap();
        let m_c = generate_dataset(dir_c.path(), 78, 33, 96).unwrap();
        assert_ne!(bytes_a, std::fs::read(&m_c).unwrap());
    }

    #[test]
    fn screencast_has_exact_windows_and_quiet_gaps() {
        let (seq, gts) = generate_screencast(4242, 5, 96).unwrap();
        assert_eq!(gts.len(), 5);
        let series = dissim_series(&seq, &SsimConfig::default()).unwrap();
        for (k, gt) in gts.iter().enumerate() {
            assert!(gt.start <= gt.end);
            if k > 0 {
                assert!(gt.start > gts[k - 1].end + 2, "gap of >= 3 static frames");
            }
            // Every in-window pair is active; pairs fully inside gaps are 0.
            for p in gt.start..gt.end {
                assert!(series[p] > 0.01, "window {k} pair {p}: {}", series[p]);
            }
        }
        for (k, gt) in gts.iter().enumerate().skip(1) {
            for p in gts[k - 1].end + 1..gt.start - 1 {
                assert_eq!(series[p], 0.0, "gap pair {p} not static");
            }
            let _ = gt;
        }
    }

    #[test]
    fn screencast_is_deterministic() {
        let (a, ga) = generate_screencast(7, 3, 96).unwrap();
        let (b, gb) = generate_screencast(7, 3, 96).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.pixels, y.pixels);
        }
        assert_eq!(ga.len(), gb.len());
        let (c, _) = generate_screencast(8, 3, 96).unwrap();
        assert!(
            a.frames.iter().zip(&c.frames).any(|(x, y)| x.pixels != y.pixels)
                || a.len() != c.len()
        );
    }

    #[test]
    fn manifest_parser_rejects_garbage() {
        assert!(parse_manifest("not json\n").is_err());
        let good = r#"{"id":"a","frame_dir":"frames/a","command":"click","widget":"Button","location":"in toolbar","start":0,"end":3,"scene_seed":1}"#;
        assert_eq!(parse_manifest(good).unwrap().len(), 1);
        assert!(parse_manifest(&good.replace("click", "clack")).unwrap()[0].action().is_err());
    }
}

#[cfg(test)]
mod debug_tests {
    #[test]
    fn debug_frames() {
        let (seq, gts) = crate::synth::generate_screencast(4242, 5, 96).unwrap();
        let gt = &gts[2];
        eprintln!("gt2: {} {} {}..{}", gt.command, gt.widget, gt.start, gt.end);
        for p in gt.start..=gt.end.min(gt.start + 4) {
            if p + 1 >= seq.frames.len() { break; }
            let a = &seq.frames[p].pixels;
            let b = &seq.frames[p + 1].pixels;
            let d = a.iter().zip(b).filter(|(x, y)| x != y).count();
            eprintln!("frames {}->{}: {} byte diffs", p, p + 1, d);
        }
        for p in [16, 20, 21] {
            crate::raster::write_rgb_png(
                std::path::Path::new(&format!("/tmp/f{p:02}.png")),
                &seq.frames[p].pixels, 96, 96).unwrap();
        }
        // where do the 20->21 diffs live?
        let a = &seq.frames[20].pixels;
        let b = &seq.frames[21].pixels;
        let mut pts = vec![];
        for i in 0..96*96 {
            if a[i*3..i*3+3] != b[i*3..i*3+3] { pts.push((i % 96, i / 96)); }
        }
        eprintln!("diff pixels 20->21: {:?}", &pts[..pts.len().min(20)]);
    }

    #[test]
    fn debug_screencast_windows() {
        use crate::segment::dissim_series;
        use crate::vision::SsimConfig;
        let (seq, gts) = crate::synth::generate_screencast(4242, 5, 96).unwrap();
        let series = dissim_series(&seq, &SsimConfig::default()).unwrap();
        for (k, gt) in gts.iter().enumerate() {
            eprintln!("window {k}: {} {} frames {}..{}", gt.command, gt.widget, gt.start, gt.end);
            for p in gt.start..gt.end {
                eprintln!("   pair {p}: {:.5}", series[p]);
            }
        }
    }
}
