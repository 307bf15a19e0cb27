// kineflow: synthetic flows, kinematic segmentation, vanishing-point
// dynamics and tensor reports from the command line.
//
// Exit codes: 0 ok, 2 usage, 3 input, 4 domain.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include "cli_support.hpp"
#include "kineflow/moment_tensor.hpp"
#include "kineflow/pipeline.hpp"
#include "kineflow/synthgen.hpp"
#include "kineflow/vp_dynamics.hpp"

namespace fs = std::filesystem;

namespace kineflow::cli {
namespace {

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty() || out_path == "-")
    std::cout << content;
  else
    write_atomic(out_path, content);
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string scenario;
  int frames = 10;
  std::optional<int> samples;
  double noise = 0.0;
  double separation = 1.0;
  std::string out = "kineflow_synth";
};

synth::Scenario scenario_from_json(const fs::path& path, const SynthArgs& a, std::uint64_t seed) {
  const json root = read_json_file(path);
  check_schema(root);
  synth::Scenario sc;
  sc.name = root.contains("name") && root["name"].is_string() ? root["name"].get<std::string>() : path.stem().string();
  sc.frames = a.frames;
  sc.noise = a.noise;
  sc.seed = seed;
  Vec3 cam_velocity = Vec3::Zero();
  if (root.contains("camera")) {
    const json& cam = root["camera"];
    if (!cam.is_object()) schema_fail("/camera", "expected an object");
    if (cam.contains("f")) sc.camera.f = number(cam["f"], "/camera/f");
    if (cam.contains("pp")) sc.camera.pp = vec2(cam["pp"], "/camera/pp");
    if (cam.contains("R")) {
      const Mat r = matrix_of(cam["R"], "/camera/R");
      if (r.rows() != 3 || r.cols() != 3) schema_fail("/camera/R", "expected 3x3");
      sc.camera.R = r;
    }
    if (cam.contains("t")) sc.camera.t = vec3(cam["t"], "/camera/t");
    if (cam.contains("velocity")) cam_velocity = vec3(cam["velocity"], "/camera/velocity");
  }
  try {
    sc.camera.validate();
  } catch (const Error& e) {
    schema_fail("/camera", e.what());
  }
  sc.path = cam_velocity.isZero() ? synth::static_camera(sc.camera) : synth::translating_camera(sc.camera, cam_velocity);
  const json& bodies = member(root, "", "bodies");
  if (!bodies.is_array() || bodies.empty()) schema_fail("/bodies", "expected a non-empty array");
  CounterRng rng(seed);
  for (std::size_t b = 0; b < bodies.size(); ++b) {
    const std::string p = "/bodies/" + std::to_string(b);
    synth::SceneBody body;
    body.label = bodies[b].contains("label") ? static_cast<int>(integer(bodies[b]["label"], p + "/label")) : static_cast<int>(b);
    if (bodies[b].contains("velocity")) body.velocity = vec3(bodies[b]["velocity"], p + "/velocity");
    if (bodies[b].contains("points")) {
      const json& pts = bodies[b]["points"];
      if (!pts.is_array()) schema_fail(p + "/points", "expected an array");
      for (std::size_t i = 0; i < pts.size(); ++i) body.points.push_back(vec3(pts[i], p + "/points/" + std::to_string(i)));
    } else {
      const json& box = member(bodies[b], p, "box");
      const Vec3 centre = vec3(member(box, p + "/box", "centre"), p + "/box/centre");
      const Vec3 size = vec3(member(box, p + "/box", "size"), p + "/box/size");
      const long count = integer(member(box, p + "/box", "count"), p + "/box/count");
      if (count < 4) schema_fail(p + "/box/count", "need >= 4 points");
      body.points = synth::box_points(centre, size, static_cast<int>(count), rng);
    }
    try {
      body.validate();
    } catch (const Error& e) {
      schema_fail(p, e.what());
    }
    sc.bodies.push_back(std::move(body));
  }
  return sc;
}

json truth_to_json(const synth::Sequence& seq) {
  json vps = json::array(), centroids = json::array(), labels = json::array();
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    json fv = json::array(), fc = json::array();
    for (const auto& v : seq.truth.vps[f]) {
      if (v.finite)
        fv.push_back(json{{"finite", true}, {"point", to_json(v.point)}});
      else
        fv.push_back(json{{"finite", false}, {"theta", v.theta}});
    }
    for (const auto& c : seq.truth.centroids[f]) fc.push_back(to_json(c));
    vps.push_back(std::move(fv));
    centroids.push_back(std::move(fc));
    labels.push_back(seq.truth.labels[f]);
  }
  return json{{"bodies", seq.truth.body_labels}, {"labels", labels}, {"vanishing_points", vps}, {"centroids", centroids}};
}

int cmd_synth(const SynthArgs& a, const Config& cfg) {
  if (a.frames < 1) throw Failure(usage, "--frames must be >= 1");
  if (a.samples && *a.samples < 4) throw Failure(usage, "--samples must be >= 4");
  if (!(a.noise >= 0)) throw Failure(usage, "--noise must be >= 0");
  if (!(a.separation > 0)) throw Failure(usage, "--separation must be > 0");
  synth::Scenario sc;
  if (a.scenario == "forward-dolly")
    sc = synth::forward_dolly(a.frames, a.samples.value_or(200), a.noise, cfg.seed);
  else if (a.scenario == "two-bodies")
    sc = synth::two_bodies(a.frames, a.separation, a.samples.value_or(100), a.noise, cfg.seed);
  else if (a.scenario == "parallel-pan")
    sc = synth::parallel_pan(a.frames, a.samples.value_or(100), a.noise, cfg.seed);
  else if (a.scenario.size() > 5 && a.scenario.ends_with(".json"))
    sc = scenario_from_json(a.scenario, a, cfg.seed);
  else
    throw Failure(usage, "unknown scenario '" + a.scenario + "' (forward-dolly, two-bodies, parallel-pan, or a .json file)");

  const synth::Sequence seq = synth::render(sc);
  const json config = cfg.to_json();
  const fs::path dir = a.out;
  for (const auto& f : seq.frames) {
    char name[32];
    std::snprintf(name, sizeof name, "flow_%04d.json", f.t);
    write_atomic(dir / name, dump(flow_to_json(f, config)));
  }
  json truth{{"schema", kSchema},
             {"scenario", sc.name},
             {"frames", sc.frames},
             {"noise", sc.noise},
             {"camera", json{{"f", sc.camera.f}, {"pp", to_json(sc.camera.pp)}}}};
  const json body = truth_to_json(seq);
  for (const auto& [k, v] : body.items()) truth[k] = v;
  truth["config"] = config;
  write_atomic(dir / "ground_truth.json", dump(truth));
  std::cerr << "wrote " << seq.frames.size() << " flow files and ground_truth.json to " << dir.string() << "\n";
  return ok;
}

// ---------------------------------------------------------------------------
// cluster

struct ClusterArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string svg;
};

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p = in;
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const std::string name = e.path().filename().string();
        if (name.starts_with("flow_") && name.ends_with(".json")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) throw Failure(input, "no flow_*.json files in " + p.string());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  return files;
}

json pencil_to_json(const flow::LinePencil& p) {
  json j{{"kind", flow::to_string(p.kind)}, {"vp", to_json(p.vp)}};
  j["point"] = p.finite() ? to_json(p.point()) : json(nullptr);
  j["theta"] = p.kind == flow::PencilKind::parallel ? json(p.theta) : json(nullptr);
  j["fit_residual"] = p.fit_residual;
  j["members"] = p.members.size();
  return j;
}

json region_to_json(const flow::KinematicRegion& r) {
  json hull = json::array();
  for (const auto& h : r.hull) hull.push_back(to_json(h));
  return json{{"id", r.id},
              {"members", r.members.size()},
              {"hull", std::move(hull)},
              {"centroid", to_json(r.centroid)},
              {"area", r.area},
              {"counter_clockwise", r.counter_clockwise},
              {"velocity", to_json(r.velocity)},
              {"weight", r.weight},
              {"linear_momentum", to_json(r.linear_momentum)},
              {"angular_momentum", r.angular_momentum},
              {"kinetic_energy", r.kinetic_energy}};
}

json kinematics_to_json(const std::vector<flow::Kinematics>& ks) {
  json a = json::array();
  for (const auto& k : ks)
    a.push_back(json{{"position", to_json(k.position)}, {"velocity", to_json(k.velocity)}, {"acceleration", to_json(k.acceleration)}});
  return a;
}

std::string svg_overlay(const flow::FlowField& field, const pipeline::FrameAnalysis& fa) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300, vmax = 0;
  for (const auto& s : field.samples) {
    x0 = std::min(x0, s.x.x());
    y0 = std::min(y0, s.x.y());
    x1 = std::max(x1, s.x.x());
    y1 = std::max(y1, s.x.y());
    vmax = std::max(vmax, s.v.norm());
  }
  const double margin = 0.1 * std::max({x1 - x0, y1 - y0, 1.0});
  x0 -= margin;
  y0 -= margin;
  x1 += margin;
  y1 += margin;
  const double vscale = vmax > 0 ? 0.05 * std::max(x1 - x0, y1 - y0) / vmax : 1.0;
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.3f %.3f %.3f %.3f\" width=\"800\" height=\"%d\">\n", x0,
                y0, x1 - x0, y1 - y0, static_cast<int>(800 * (y1 - y0) / (x1 - x0)));
  out += buf;
  const double stroke = 0.002 * std::max(x1 - x0, y1 - y0);
  for (std::size_t i = 0; i < field.samples.size(); ++i) {
    const auto& s = field.samples[i];
    const int label = fa.clustering.labels[i];
    const char* colour = label < 0 ? "#999999" : palette[static_cast<std::size_t>(label) % 8];
    const Vec2 tip = s.x + vscale * s.v;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"%s\" stroke-width=\"%.3f\"/>"
                  "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"%.3f\" fill=\"%s\"/>\n",
                  s.x.x(), s.x.y(), tip.x(), tip.y(), colour, stroke, s.x.x(), s.x.y(), 2 * stroke, colour);
    out += buf;
  }
  for (std::size_t c = 0; c < fa.clusters.size(); ++c) {
    const auto& ca = fa.clusters[c];
    const char* colour = palette[c % 8];
    if (ca.region) {
      out += "<polygon fill=\"none\" stroke=\"";
      out += colour;
      std::snprintf(buf, sizeof buf, "\" stroke-width=\"%.3f\" points=\"", 2 * stroke);
      out += buf;
      for (const auto& h : ca.region->hull) {
        std::snprintf(buf, sizeof buf, "%.3f,%.3f ", h.x(), h.y());
        out += buf;
      }
      out += "\"/>\n";
    }
    if (ca.pencil && ca.pencil->finite()) {
      const Vec2 v = ca.pencil->point();
      const double r = 6 * stroke;
      std::snprintf(buf, sizeof buf,
                    "<path d=\"M%.3f %.3fL%.3f %.3fM%.3f %.3fL%.3f %.3f\" stroke=\"%s\" stroke-width=\"%.3f\"/>\n",
                    v.x() - r, v.y() - r, v.x() + r, v.y() + r, v.x() - r, v.y() + r, v.x() + r, v.y() - r, colour, 2 * stroke);
      out += buf;
    }
  }
  out += "</svg>\n";
  return out;
}

int cmd_cluster(const ClusterArgs& a, const Config& cfg) {
  std::vector<flow::FlowField> fields;
  std::set<int> times;
  for (const auto& p : expand_inputs(a.inputs)) {
    try {
      fields.push_back(read_flow(p));
    } catch (const Failure& f) {
      throw Failure(f.exit_code, p.string() + ": " + f.what());
    }
    if (!times.insert(fields.back().t).second) throw Failure(input, p.string() + ": duplicate frame t = " + std::to_string(fields.back().t));
  }
  std::stable_sort(fields.begin(), fields.end(), [](const auto& x, const auto& y) { return x.t < y.t; });

  pipeline::Options opts;
  opts.k = cfg.k;
  opts.nsigma = cfg.nsigma;
  opts.seed = cfg.seed;
  opts.pencil.speed_floor = cfg.speed_floor;
  opts.pencil.condition_threshold = cfg.condition_threshold;
  opts.pencil.classify_tolerance = cfg.classify_tolerance;
  const pipeline::SequenceAnalysis seq = pipeline::analyze_sequence(fields, opts);

  json frames = json::array();
  for (const auto& fa : seq.frames) {
    json clusters = json::array();
    for (std::size_t c = 0; c < fa.clusters.size(); ++c) {
      const auto& ca = fa.clusters[c];
      json jc{{"id", c},
              {"members", ca.cluster.members},
              {"outliers_removed", ca.cluster.members.size() - ca.kept.size()},
              {"center_x", to_json(ca.cluster.center_x)},
              {"center_v", to_json(ca.cluster.center_v)}};
      jc["pencil"] = ca.pencil ? pencil_to_json(*ca.pencil) : json(nullptr);
      jc["region"] = ca.region ? region_to_json(*ca.region) : json(nullptr);
      jc["previous_region"] = ca.previous_region ? json(*ca.previous_region) : json(nullptr);
      clusters.push_back(std::move(jc));
    }
    frames.push_back(json{{"t", fa.t},
                          {"apparent_kinetic_energy", fa.apparent_kinetic_energy},
                          {"background", fa.clustering.background.size()},
                          {"wcss", fa.clustering.wcss},
                          {"iterations", fa.clustering.iterations},
                          {"clusters", std::move(clusters)}});
  }
  json tracks = json::array();
  for (const auto& t : seq.tracks) {
    json ids = json::array();
    for (std::size_t j = 0; j < t.region_index.size(); ++j)
      ids.push_back(seq.frames[static_cast<std::size_t>(t.first_frame) + j].regions()[t.region_index[j]].id);
    tracks.push_back(json{{"first_frame", seq.frames[static_cast<std::size_t>(t.first_frame)].t},
                          {"regions", std::move(ids)},
                          {"kinematics", kinematics_to_json(t.kinematics)},
                          {"midpoints", kinematics_to_json(t.midpoints)}});
  }
  for (const auto& w : seq.warnings) warn(w);
  const json doc{{"schema", kSchema}, {"config", cfg.to_json()},    {"frames", std::move(frames)},
                 {"tracks", std::move(tracks)}, {"warnings", seq.warnings}};
  emit(a.out, dump(doc));
  if (!a.svg.empty()) write_atomic(a.svg, svg_overlay(fields.back(), seq.frames.back()));
  return ok;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string preset;
  std::string charges;
  std::vector<std::string> centers;
  std::string triangle;
  std::string q = "1,0";
  std::string p = "0,1";
  bool repulsive = false;
  std::string method = "leapfrog";
  std::string out;
  std::string report;
};

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string cell = text.substr(pos, comma - pos);
    double v = 0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
      throw Failure(usage, flag + ": '" + cell + "' is not a number");
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

vp::ChargeSystem charges_from_json(const fs::path& path) {
  const json root = read_json_file(path);
  check_schema(root);
  vp::ChargeSystem s;
  if (root.contains("triangle")) {
    const json& tri = root["triangle"];
    if (!tri.is_array() || tri.size() != 3) schema_fail("/triangle", "expected three vertices");
    std::array<int, 3> signs{1, 1, 1};
    if (root.contains("signs")) {
      const Vec sv = vector_of(root["signs"], "/signs", 3);
      for (int j = 0; j < 3; ++j) {
        if (sv[j] != 1 && sv[j] != -1) schema_fail("/signs/" + std::to_string(j), "expected +1 or -1");
        signs[static_cast<std::size_t>(j)] = static_cast<int>(sv[j]);
      }
    }
    return vp::triangle_system(vec2(tri[0], "/triangle/0"), vec2(tri[1], "/triangle/1"), vec2(tri[2], "/triangle/2"), signs);
  }
  const json& centers = member(root, "", "centers");
  if (!centers.is_array()) schema_fail("/centers", "expected an array");
  for (std::size_t j = 0; j < centers.size(); ++j) {
    const std::string p = "/centers/" + std::to_string(j);
    vp::ChargeCenter c;
    c.position = vec2(member(centers[j], p, "position"), p + "/position");
    c.mass = number(member(centers[j], p, "mass"), p + "/mass");
    if (!(c.mass > 0)) schema_fail(p + "/mass", "must be > 0");
    if (centers[j].contains("sign")) {
      const long sign = integer(centers[j]["sign"], p + "/sign");
      if (sign != 1 && sign != -1) schema_fail(p + "/sign", "expected +1 or -1");
      c.sign = static_cast<int>(sign);
    }
    s.centers.push_back(c);
  }
  return s;
}

int cmd_simulate(const SimulateArgs& a, Config cfg, const ConfigFlags& flags) {
  const int sources = !a.preset.empty() + !a.charges.empty() + !a.centers.empty() + !a.triangle.empty();
  if (sources != 1) throw Failure(usage, "give exactly one of --preset, --charges, --center, --triangle");
  vp::ChargeSystem system;
  Vec2 q0, p0;
  {
    const auto q = parse_list(a.q, "--q");
    const auto p = parse_list(a.p, "--p");
    if (q.size() != 2 || p.size() != 2) throw Failure(usage, "--q and --p take x,y");
    q0 = Vec2(q[0], q[1]);
    p0 = Vec2(p[0], p[1]);
  }
  if (!a.preset.empty()) {
    if (a.preset != "circular-orbit") throw Failure(usage, "unknown preset '" + a.preset + "' (circular-orbit)");
    system.centers = {{Vec2::Zero(), 1.0, 1}};
    q0 = Vec2(1, 0);
    p0 = Vec2(0, 1);
    if (!flags.explicit_dt()) cfg.dt = 1e-3;
    if (!flags.explicit_steps()) cfg.steps = 100000;
  } else if (!a.charges.empty()) {
    system = charges_from_json(a.charges);
  } else if (!a.triangle.empty()) {
    const auto v = parse_list(a.triangle, "--triangle");
    if (v.size() != 6) throw Failure(usage, "--triangle takes x1,y1,x2,y2,x3,y3");
    system = vp::triangle_system(Vec2(v[0], v[1]), Vec2(v[2], v[3]), Vec2(v[4], v[5]));
  } else {
    for (const auto& c : a.centers) {
      const auto v = parse_list(c, "--center");
      if (v.size() != 3 && v.size() != 4) throw Failure(usage, "--center takes x,y,mass[,sign]");
      if (!(v[2] > 0)) throw Failure(usage, "--center mass must be > 0");
      const int sign = v.size() == 4 ? (v[3] < 0 ? -1 : 1) : 1;
      system.centers.push_back({Vec2(v[0], v[1]), v[2], sign});
    }
  }
  if (a.repulsive)
    for (auto& c : system.centers) c.sign = -c.sign;
  system.epsilon = cfg.epsilon;
  system.validate();

  phase::Method method;
  if (a.method == "leapfrog")
    method = phase::Method::leapfrog;
  else if (a.method == "midpoint")
    method = phase::Method::implicit_midpoint;
  else
    throw Failure(usage, "unknown --method '" + a.method + "' (leapfrog, midpoint)");

  const phase::PhasePoint z0{Vec(q0), Vec(p0)};
  const auto steps = static_cast<std::size_t>(cfg.steps);
  const vp::SimulationResult r = vp::simulate(system, z0, cfg.dt, steps, method);
  const double reversal = vp::time_reversal_residual(system, z0, cfg.dt, steps, method);
  for (const auto& w : r.warnings) warn(w);

  std::ostringstream csv;
  vp::write_trajectory_csv(csv, r);
  emit(a.out, csv.str());

  json centers = json::array();
  for (const auto& c : system.centers)
    centers.push_back(json{{"position", to_json(c.position)}, {"mass", c.mass}, {"sign", c.sign}});
  const auto& last = r.trajectory.states.back();
  json report{{"schema", kSchema},
              {"config", cfg.to_json()},
              {"method", a.method},
              {"centers", std::move(centers)},
              {"q0", to_json(q0)},
              {"p0", to_json(p0)},
              {"H0", r.energy.front()},
              {"energy_drift", r.energy_drift},
              {"time_reversal_residual", reversal},
              {"min_distance", std::isfinite(r.min_distance) ? json(r.min_distance) : json(nullptr)},
              {"final_q", to_json(Vec2(last.q[0], last.q[1]))},
              {"final_p", to_json(Vec2(last.p[0], last.p[1]))},
              {"warnings", r.warnings}};
  if (system.centers.size() == 2 || system.centers.size() == 3) {
    const auto m = vp::evaluate_m_expression(z0, system);
    report["m_expression_initial"] = m.value;
  }
  if (a.report.empty()) {
    if (a.out.empty() || a.out == "-")
      std::cerr << dump(report);
    else
      std::cout << dump(report);
  } else {
    write_atomic(a.report, dump(report));
  }
  return ok;
}

// ---------------------------------------------------------------------------
// tensor

struct TensorArgs {
  std::string gradients;
  std::string jacobian;
  bool third_order = false;
  std::string out;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<moment::GradientSample> read_gradient_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Failure(input, "cannot read " + path.string());
  std::vector<moment::GradientSample> out;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (row == 1 && cells.size() == 3 && cells[0] == "Ix" && cells[1] == "Iy" && cells[2] == "It") continue;
    if (cells.size() != 3)
      throw Failure(input, path.string() + ": row " + std::to_string(row) + ": expected 3 columns, found " + std::to_string(cells.size()));
    double v[3];
    for (int c = 0; c < 3; ++c) {
      const std::string& t = cells[static_cast<std::size_t>(c)];
      const auto res = std::from_chars(t.data(), t.data() + t.size(), v[c]);
      if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v[c]))
        throw Failure(input, path.string() + ": row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                                 ": '" + t + "' is not a number");
    }
    out.push_back({v[0], v[1], v[2]});
  }
  if (out.empty()) throw Failure(input, path.string() + ": no gradient rows");
  return out;
}

json report_to_json(const moment::SymmetricTensorReport& r) {
  return json{{"matrix", to_json(r.matrix)}, {"eigenvalues", to_json(r.eigenvalues)}, {"rank", r.rank}, {"tolerance", r.tolerance}};
}

int cmd_tensor(const TensorArgs& a, const Config& cfg) {
  if (a.gradients.empty() && a.jacobian.empty()) throw Failure(usage, "give --gradients and/or --jacobian");
  json doc{{"schema", kSchema}, {"config", cfg.to_json()}};
  if (!a.gradients.empty()) {
    const auto samples = read_gradient_csv(a.gradients);
    const auto ms = moment::motion_structure_tensor(samples, a.third_order, cfg.rank_tolerance);
    json j = report_to_json(ms.second);
    j["samples"] = samples.size();
    if (ms.third) j["third_order"] = *ms.third;
    doc["motion_structure"] = std::move(j);
  }
  if (!a.jacobian.empty()) {
    const json root = read_json_file(a.jacobian);
    check_schema(root);
    const Mat jm = matrix_of(member(root, "", "jacobian"), "/jacobian");
    doc["jacobian_shape"] = json::array({jm.rows(), jm.cols()});
    doc["anticipation"] = report_to_json(moment::anticipation(jm, cfg.rank_tolerance));
    doc["compensation"] = report_to_json(moment::compensation(jm, cfg.rank_tolerance));
  }
  emit(a.out, dump(doc));
  return ok;
}

int run(int argc, char** argv) {
  CLI::App app{"kineflow: differential kinematics toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  ConfigFlags flags;
  flags.attach(app);

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic flow fields with ground truth");
  synth_cmd->add_option("scenario", sa.scenario, "forward-dolly | two-bodies | parallel-pan | scenario.json")->required();
  synth_cmd->add_option("--frames", sa.frames, "number of frames");
  synth_cmd->add_option("--samples", sa.samples, "points per body");
  synth_cmd->add_option("--noise", sa.noise, "Gaussian velocity noise (px/frame)");
  synth_cmd->add_option("--separation", sa.separation, "two-bodies image speed gap (px/frame)");
  synth_cmd->add_option("--out", sa.out, "output directory");

  ClusterArgs ca;
  auto* cluster_cmd = app.add_subcommand("cluster", "segment flow fields into kinematic regions");
  cluster_cmd->add_option("inputs", ca.inputs, "flow JSON files or directories")->required();
  cluster_cmd->add_option("--out", ca.out, "result JSON (default stdout)");
  cluster_cmd->add_option("--svg", ca.svg, "SVG overlay of the last frame");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "integrate an agent among vanishing-point charges");
  sim_cmd->add_option("--preset", sim.preset, "circular-orbit");
  sim_cmd->add_option("--charges", sim.charges, "charge system JSON");
  sim_cmd->add_option("--center", sim.centers, "x,y,mass[,sign] (repeatable)");
  sim_cmd->add_option("--triangle", sim.triangle, "x1,y1,x2,y2,x3,y3 with orthocenter masses");
  sim_cmd->add_option("--q", sim.q, "initial position x,y");
  sim_cmd->add_option("--p", sim.p, "initial momentum x,y");
  sim_cmd->add_flag("--repulsive", sim.repulsive, "flip every charge sign");
  sim_cmd->add_option("--method", sim.method, "leapfrog | midpoint");
  sim_cmd->add_option("--out", sim.out, "trajectory CSV (default stdout)");
  sim_cmd->add_option("--report", sim.report, "conservation report JSON");

  TensorArgs ta;
  auto* tensor_cmd = app.add_subcommand("tensor", "motion structure and Jacobian Gram tensors");
  tensor_cmd->add_option("--gradients", ta.gradients, "CSV of Ix,Iy,It rows");
  tensor_cmd->add_option("--jacobian", ta.jacobian, "Jacobian JSON");
  tensor_cmd->add_flag("--third-order", ta.third_order, "include raw third moments");
  tensor_cmd->add_option("--out", ta.out, "report JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return usage;
  }

  try {
    const Config cfg = flags.resolve();
    if (synth_cmd->parsed()) return cmd_synth(sa, cfg);
    if (cluster_cmd->parsed()) return cmd_cluster(ca, cfg);
    if (sim_cmd->parsed()) return cmd_simulate(sim, cfg, flags);
    if (tensor_cmd->parsed()) return cmd_tensor(ta, cfg);
    return usage;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.what() << "\n";
    return f.exit_code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what();
    if (e.index() >= 0) std::cerr << " (index " << e.index() << ")";
    std::cerr << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return input;
  }
}

}  // namespace
}  // namespace kineflow::cli

int main(int argc, char** argv) { return kineflow::cli::run(argc, argv); }
