#include "cadloop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "cadloop/error.hpp"
#include "cadloop/hex8.hpp"

namespace cadloop {

using nlohmann::json;

std::string_view role_name(AnchorRole role) {
  return role == AnchorRole::kFixed ? "fixed" : "load";
}

AnchorRole parse_role(std::string_view name) {
  if (name == "fixed") return AnchorRole::kFixed;
  if (name == "load") return AnchorRole::kLoad;
  throw Error(ErrorCode::kParse, "unknown anchor role '" + std::string(name) + "'");
}

std::string_view param_role_name(ParamRole role) {
  switch (role) {
    case ParamRole::kStiffness: return "stiffness";
    case ParamRole::kCompliance: return "compliance";
    case ParamRole::kBulk: return "bulk";
    case ParamRole::kNeutral: return "neutral";
  }
  return "neutral";
}

json params_to_json(const PartCategory& category, const ParamVector& params) {
  json obj = json::object();
  for (std::size_t i = 0; i < category.parameters.size() && i < params.values.size(); ++i) {
    obj[category.parameters[i].name] = params.values[i];
  }
  return obj;
}

ParamVector params_from_json(const PartCategory& category, const json& obj) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::kMalformedArgs, "parameters must be an object of name -> number");
  }
  ParamVector out;
  for (const auto& param : category.parameters) {
    auto it = obj.find(param.name);
    if (it == obj.end() || !it->is_number()) {
      throw Error(ErrorCode::kMalformedArgs,
                  "parameter '" + param.name + "' missing or not a number for category '" +
                      category.id + "'");
    }
    out.values.push_back(it->get<double>());
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(category.parameters.begin(), category.parameters.end(),
                                   [&](const ParamSpec& s) { return s.name == it.key(); });
    if (!known) {
      throw Error(ErrorCode::kMalformedArgs,
                  "unexpected parameter '" + it.key() + "' for category '" + category.id + "'");
    }
  }
  return out;
}

namespace {

constexpr double kPi = std::numbers::pi;

// Merges coincident points produced by adjacent blocks.
class NodeMerger {
 public:
  explicit NodeMerger(double length_scale) : quantum_(length_scale * 1e-9) {}

  int add(const Vec3& p) {
    const std::array<long long, 3> key{std::llround(p[0] / quantum_),
                                       std::llround(p[1] / quantum_),
                                       std::llround(p[2] / quantum_)};
    auto [it, inserted] = index_.emplace(key, static_cast<int>(nodes_.size()));
    if (inserted) nodes_.push_back(p);
    return it->second;
  }

  std::vector<Vec3> take() { return std::move(nodes_); }
  const std::vector<Vec3>& nodes() const { return nodes_; }

 private:
  double quantum_;
  std::map<std::array<long long, 3>, int> index_;
  std::vector<Vec3> nodes_;
};

class MeshBuilder {
 public:
  explicit MeshBuilder(double length_scale) : merger_(length_scale) {}

  // Corners in hex8 local order; orientation is normalised so the centre
  // Jacobian is positive.
  void add_hex(const std::array<Vec3, 8>& corners) {
    std::array<int, 8> conn{};
    for (int a = 0; a < 8; ++a) conn[a] = merger_.add(corners[a]);
    elements_.push_back(conn);
  }

  Mesh finish() {
    Mesh mesh;
    mesh.nodes = merger_.take();
    mesh.elements = std::move(elements_);
    for (auto& conn : mesh.elements) {
      const auto x = hex8::gather(mesh.nodes, conn);
      const double det = hex8::jacobian(x, hex8::shape_gradients(0, 0, 0)).determinant();
      if (det < 0) {
        for (int a = 0; a < 4; ++a) std::swap(conn[a], conn[a + 4]);
      }
    }
    return mesh;
  }

 private:
  NodeMerger merger_;
  std::vector<std::array<int, 8>> elements_;
};

// Tensor-product block over a map (s,t,u) in [0,1]^3 -> R^3.
void add_block(MeshBuilder& b, int ns, int nt, int nu,
               const std::function<Vec3(double, double, double)>& map) {
  for (int k = 0; k < nu; ++k) {
    for (int j = 0; j < nt; ++j) {
      for (int i = 0; i < ns; ++i) {
        std::array<Vec3, 8> c{};
        for (int a = 0; a < 8; ++a) {
          const int di = hex8::kNodeNatural[a][0] > 0 ? 1 : 0;
          const int dj = hex8::kNodeNatural[a][1] > 0 ? 1 : 0;
          const int dk = hex8::kNodeNatural[a][2] > 0 ? 1 : 0;
          c[a] = map(double(i + di) / ns, double(j + dj) / nt, double(k + dk) / nu);
        }
        b.add_hex(c);
      }
    }
  }
}

// Axis-aligned box block [x0,x1]x[y0,y1]x[z0,z1].
void add_box(MeshBuilder& b, double x0, double x1, double y0, double y1, double z0, double z1,
             int nx, int ny, int nz) {
  add_block(b, nx, ny, nz, [=](double s, double t, double u) {
    return Vec3{x0 + s * (x1 - x0), y0 + t * (y1 - y0), z0 + u * (z1 - z0)};
  });
}

// Radius scale that makes a regular n-gon inscribed at the scaled radius
// enclose the same area as the circle.
double area_preserving_scale(int segments) {
  const double n = segments;
  return std::sqrt(2.0 * kPi / (n * std::sin(2.0 * kPi / n)));
}

struct Classifier {
  double tol;
  bool near(double a, double b) const { return std::abs(a - b) <= tol; }
};

struct BuildOutput {
  Mesh mesh;
  std::function<std::string(const Vec3& centroid, const Vec3& normal)> classify;
  std::vector<AnchorPoint> anchors;
  double volume = 0.0;
};

using Builder = std::function<BuildOutput(const std::vector<double>&, int)>;

[[noreturn]] void degenerate(const std::string& category, const std::string& why) {
  throw Error(ErrorCode::kDegenerateGeometry, category + ": " + why);
}

// Tags the six sides of an axis-aligned box region.
std::string box_side(const Vec3& n, const std::array<std::string, 6>& names) {
  // names: -x, +x, -y, +y, -z, +z
  int axis = 0;
  for (int d = 1; d < 3; ++d) {
    if (std::abs(n[d]) > std::abs(n[axis])) axis = d;
  }
  return names[2 * axis + (n[axis] > 0 ? 1 : 0)];
}

BuildOutput build_flat_plate(const std::vector<double>& p, int d) {
  const double len = p[0], wid = p[1], thk = p[2];
  MeshBuilder b(std::max({len, wid, thk}));
  add_box(b, 0, len, 0, wid, 0, thk, 3 * d, 2 * d, std::max(2, d / 2));
  BuildOutput out;
  out.mesh = b.finish();
  out.classify = [](const Vec3&, const Vec3& n) {
    return box_side(n, {"root_end", "free_end", "side_front", "side_back", "bottom", "top"});
  };
  out.anchors = {{{0.0, wid / 2, thk / 2}, AnchorRole::kFixed, "root_end"},
                 {{len / 2, wid / 2, thk}, AnchorRole::kLoad, "top"}};
  out.volume = len * wid * thk;
  return out;
}

BuildOutput build_box_beam(const std::vector<double>& p, int d) {
  const double len = p[0], wid = p[1], hgt = p[2], wall = p[3];
  if (2 * wall >= wid || 2 * wall >= hgt) {
    degenerate("cantilever_box_beam", "wall_thickness must be below half of width and height");
  }
  MeshBuilder b(std::max({len, wid, hgt}));
  const int nx = 5 * d, nm = std::max(1, d), nw = std::max(1, d / 4);
  const std::array<double, 4> ys{0, wall, wid - wall, wid};
  const std::array<double, 4> zs{0, wall, hgt - wall, hgt};
  const std::array<int, 3> counts{nw, nm, nw};
  for (int bz = 0; bz < 3; ++bz) {
    for (int by = 0; by < 3; ++by) {
      if (by == 1 && bz == 1) continue;  // hollow core
      add_box(b, 0, len, ys[by], ys[by + 1], zs[bz], zs[bz + 1], nx, counts[by], counts[bz]);
    }
  }
  BuildOutput out;
  out.mesh = b.finish();
  const Classifier c{1e-9 * std::max({len, wid, hgt})};
  out.classify = [=](const Vec3& x, const Vec3& n) -> std::string {
    const std::string side =
        box_side(n, {"root_end", "free_end", "side_front", "side_back", "bottom", "top"});
    if (side == "top" && !c.near(x[2], hgt)) return "cavity";
    if (side == "bottom" && !c.near(x[2], 0)) return "cavity";
    if (side == "side_front" && !c.near(x[1], 0)) return "cavity";
    if (side == "side_back" && !c.near(x[1], wid)) return "cavity";
    return side;
  };
  // The end face is a rectangular frame; its anchor sits mid-way across the
  // bottom wall so that it lies on material.
  out.anchors = {{{0.0, wid / 2, wall / 2}, AnchorRole::kFixed, "root_end"},
                 {{len / 2, wid / 2, hgt}, AnchorRole::kLoad, "top"}};
  out.volume = len * (wid * hgt - (wid - 2 * wall) * (hgt - 2 * wall));
  return out;
}

BuildOutput build_l_bracket(const std::vector<double>& p, int d) {
  const double leg_len = p[0], leg_hgt = p[1], wid = p[2], thk = p[3];
  if (thk >= leg_len || thk >= leg_hgt) {
    degenerate("l_bracket", "thickness must be below both leg dimensions");
  }
  MeshBuilder b(std::max({leg_len, leg_hgt, wid}));
  const int nt = std::max(1, d / 2), na = 2 * d, ny = std::max(1, d);
  add_box(b, 0, thk, 0, wid, 0, thk, nt, ny, nt);             // corner
  add_box(b, thk, leg_len, 0, wid, 0, thk, na, ny, nt);       // horizontal shelf
  add_box(b, 0, thk, 0, wid, thk, leg_hgt, nt, ny, na);       // vertical leg
  BuildOutput out;
  out.mesh = b.finish();
  const Classifier c{1e-9 * std::max({leg_len, leg_hgt, wid})};
  out.classify = [=](const Vec3& x, const Vec3& n) -> std::string {
    const std::string side =
        box_side(n, {"wall_face", "+x", "side_front", "side_back", "bottom", "+z"});
    if (side == "+x") return c.near(x[0], leg_len) ? "shelf_end" : "leg_inner";
    if (side == "+z") return c.near(x[2], leg_hgt) ? "leg_top" : "shelf_top";
    return side;
  };
  out.anchors = {{{0.0, wid / 2, leg_hgt / 2}, AnchorRole::kFixed, "wall_face"},
                 {{(thk + leg_len) / 2, wid / 2, thk}, AnchorRole::kLoad, "shelf_top"}};
  out.volume = wid * thk * (leg_len + leg_hgt - thk);
  return out;
}

BuildOutput build_annular_flange(const std::vector<double>& p, int d) {
  const double r_out = p[0], r_in = p[1], thk = p[2];
  if (r_in >= r_out) degenerate("annular_flange", "inner_radius must be below outer_radius");
  const int nr = std::max(1, d), nth = 8 * std::max(1, d), nz = std::max(1, d / 2);
  const double scale = area_preserving_scale(nth);
  const double ri = r_in * scale, ro = r_out * scale;
  MeshBuilder b(std::max(ro, thk));
  add_block(b, nr, nth, nz, [=](double s, double t, double u) {
    const double r = ri + s * (ro - ri);
    const double th = 2.0 * kPi * t;
    return Vec3{r * std::cos(th), r * std::sin(th), u * thk};
  });
  BuildOutput out;
  out.mesh = b.finish();
  out.classify = [=](const Vec3& x, const Vec3& n) -> std::string {
    if (std::abs(n[2]) > 0.5) return n[2] > 0 ? "top" : "bottom";
    return std::hypot(x[0], x[1]) < 0.5 * (ri + ro) ? "bore" : "rim";
  };
  // Both anchors sit on the theta = 0 seam, which is on the polygonal faces.
  out.anchors = {{{ri, 0.0, thk / 2}, AnchorRole::kFixed, "bore"},
                 {{0.5 * (ri + ro), 0.0, thk}, AnchorRole::kLoad, "top"}};
  out.volume = kPi * (r_out * r_out - r_in * r_in) * thk;
  return out;
}

BuildOutput build_bushing(const std::vector<double>& p, int d) {
  const double radius = p[0], len = p[1];
  const int m = std::max(2, d), nr = std::max(1, d / 2), nz = 2 * std::max(1, d);
  const double rs = radius * area_preserving_scale(4 * m);
  const double core = 0.45 * rs;  // half-width of the square core
  MeshBuilder b(std::max(rs, len));
  add_box(b, -core, core, -core, core, 0, len, m, m, nz);
  for (int q = 0; q < 4; ++q) {
    const double rot = q * kPi / 2;
    const double cr = std::cos(rot), sr = std::sin(rot);
    add_block(b, nr, m, nz, [=](double s, double t, double u) {
      // s: radial from the core edge to the rim, t: along the edge.
      const double yi = -core + 2 * core * t;
      const double phi = -kPi / 4 + (kPi / 2) * t;
      const double x0 = core, y0 = yi;
      const double x1 = rs * std::cos(phi), y1 = rs * std::sin(phi);
      const double x = x0 + s * (x1 - x0), y = y0 + s * (y1 - y0);
      return Vec3{cr * x - sr * y, sr * x + cr * y, u * len};
    });
  }
  BuildOutput out;
  out.mesh = b.finish();
  out.classify = [](const Vec3&, const Vec3& n) -> std::string {
    if (std::abs(n[2]) > 0.5) return n[2] > 0 ? "top_end" : "base";
    return "mantle";
  };
  out.anchors = {{{0.0, 0.0, 0.0}, AnchorRole::kFixed, "base"},
                 {{0.0, 0.0, len}, AnchorRole::kLoad, "top_end"}};
  out.volume = kPi * radius * radius * len;
  return out;
}

BuildOutput build_hex_nut_blank(const std::vector<double>& p, int d) {
  const double af = p[0], hgt = p[1];
  const double rc = af / std::sqrt(3.0);  // circumradius
  std::array<Vec3, 6> v{};
  for (int k = 0; k < 6; ++k) {
    const double a = -kPi / 6 + k * kPi / 3;
    v[k] = {rc * std::cos(a), rc * std::sin(a), 0.0};
  }
  const int n = std::max(1, d), nz = std::max(1, d);
  MeshBuilder b(std::max(af, hgt));
  for (int r = 0; r < 3; ++r) {
    const Vec3 a = v[2 * r], bb = v[2 * r + 1], c = v[(2 * r + 2) % 6];
    add_block(b, n, n, nz, [=](double s, double t, double u) {
      // Bilinear rhombus: centre, a, bb, c.
      Vec3 q{};
      for (int i = 0; i < 2; ++i) {
        q[i] = s * (1 - t) * a[i] + s * t * bb[i] + (1 - s) * t * c[i];
      }
      q[2] = u * hgt;
      return q;
    });
  }
  BuildOutput out;
  out.mesh = b.finish();
  out.classify = [](const Vec3&, const Vec3& n) -> std::string {
    if (std::abs(n[2]) > 0.5) return n[2] > 0 ? "top" : "bottom";
    double ang = std::atan2(n[1], n[0]);
    if (ang < 0) ang += 2 * kPi;
    const int k = static_cast<int>(std::lround(ang / (kPi / 3))) % 6;
    return "flat_" + std::to_string(k);
  };
  out.anchors = {{{0.0, 0.0, 0.0}, AnchorRole::kFixed, "bottom"},
                 {{af / 2, 0.0, hgt / 2}, AnchorRole::kLoad, "flat_0"}};
  out.volume = std::sqrt(3.0) / 2.0 * af * af * hgt;
  return out;
}

struct TemplateEntry {
  PartCategory category;
  Builder build;
};

const std::vector<TemplateEntry>& registry() {
  using R = ParamRole;
  static const std::vector<TemplateEntry> entries = {
      {{"flat_plate",
        "Rectangular plate clamped along one short edge, uniform pressure on the top face",
        {{"length", 50, 400, "mm", R::kNeutral},
         {"width", 20, 200, "mm", R::kBulk},
         {"thickness", 2, 30, "mm", R::kStiffness}},
        {{AnchorRole::kFixed, "root_end", "centroid of the x = 0 end face"},
         {AnchorRole::kLoad, "top", "centroid of the top face"}},
        false},
       build_flat_plate},
      {{"cantilever_box_beam",
        "Hollow rectangular cantilever clamped at the root, uniform pressure on the top flange",
        {{"length", 100, 1000, "mm", R::kNeutral},
         {"width", 20, 200, "mm", R::kBulk},
         {"height", 20, 200, "mm", R::kStiffness},
         {"wall_thickness", 1, 20, "mm", R::kNeutral}},
        {{AnchorRole::kFixed, "root_end", "mid-width of the bottom wall on the x = 0 end"},
         {AnchorRole::kLoad, "top", "centroid of the top flange face"}},
        false},
       build_box_beam},
      {{"l_bracket",
        "Wall-mounted L bracket, pressure on the horizontal shelf",
        {{"leg_length", 40, 300, "mm", R::kNeutral},
         {"leg_height", 40, 300, "mm", R::kNeutral},
         {"width", 10, 150, "mm", R::kBulk},
         {"thickness", 3, 40, "mm", R::kStiffness}},
        {{AnchorRole::kFixed, "wall_face", "centroid of the x = 0 mounting face"},
         {AnchorRole::kLoad, "shelf_top", "centroid of the shelf top face"}},
        false},
       build_l_bracket},
      {{"annular_flange",
        "Flat annular flange clamped on its bore, pressure on the top face",
        {{"outer_radius", 20, 200, "mm", R::kBulk},
         {"inner_radius", 5, 150, "mm", R::kNeutral},
         {"thickness", 2, 50, "mm", R::kStiffness}},
        {{AnchorRole::kFixed, "bore", "bore surface at theta = 0, mid-thickness"},
         {AnchorRole::kLoad, "top", "top face at theta = 0, mid-radius"}},
        false},
       build_annular_flange},
      {{"solid_cylinder_bushing",
        "Solid cylindrical bushing seated on its base, axial pressure on the top end",
        {{"radius", 5, 100, "mm", R::kBulk},
         {"length", 10, 300, "mm", R::kCompliance}},
        {{AnchorRole::kFixed, "base", "centre of the z = 0 end face"},
         {AnchorRole::kLoad, "top_end", "centre of the z = length end face"}},
        false},
       build_bushing},
      {{"hex_prism_nut_blank",
        "Hexagonal nut blank seated on its bottom face, lateral pressure on one flat",
        {{"across_flats", 8, 100, "mm", R::kStiffness},
         {"thickness", 3, 60, "mm", R::kCompliance}},
        {{AnchorRole::kFixed, "bottom", "centre of the bottom face"},
         {AnchorRole::kLoad, "flat_0", "centroid of the +x flat"}},
        true},
       build_hex_nut_blank},
  };
  return entries;
}

const TemplateEntry& find_entry(std::string_view id) {
  for (const auto& e : registry()) {
    if (e.category.id == id) return e;
  }
  throw Error(ErrorCode::kUnknownCategory, "unknown part category '" + std::string(id) + "'");
}

void check_bounds(const PartCategory& category, const ParamVector& params) {
  if (params.values.size() != category.parameters.size()) {
    throw Error(ErrorCode::kParamOutOfBounds,
                category.id + ": expected " + std::to_string(category.parameters.size()) +
                    " parameters, got " + std::to_string(params.values.size()));
  }
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const auto& s = category.parameters[i];
    const double v = params.values[i];
    if (!std::isfinite(v) || v < s.lower || v > s.upper) {
      std::ostringstream msg;
      msg << category.id << ": parameter '" << s.name << "' = " << v << " outside [" << s.lower
          << ", " << s.upper << "] " << s.unit;
      throw Error(ErrorCode::kParamOutOfBounds, msg.str());
    }
  }
}

Vec3 face_centroid(const Mesh& mesh, const std::array<int, 4>& f) {
  Vec3 c{};
  for (int n : f) {
    for (int k = 0; k < 3; ++k) c[k] += 0.25 * mesh.nodes[n][k];
  }
  return c;
}

}  // namespace

const std::vector<PartCategory>& part_categories() {
  static const std::vector<PartCategory> cats = [] {
    std::vector<PartCategory> out;
    for (const auto& e : registry()) out.push_back(e.category);
    return out;
  }();
  return cats;
}

const PartCategory& find_category(std::string_view id) { return find_entry(id).category; }

const std::vector<ParamSpec>& param_schema(std::string_view category_id) {
  return find_category(category_id).parameters;
}

std::vector<BoundaryFace> extract_boundary_faces(const Mesh& mesh) {
  std::map<std::array<int, 4>, int> count;
  for (const auto& conn : mesh.elements) {
    for (const auto& lf : hex8::kFaces) {
      std::array<int, 4> key{conn[lf[0]], conn[lf[1]], conn[lf[2]], conn[lf[3]]};
      std::sort(key.begin(), key.end());
      ++count[key];
    }
  }
  std::vector<BoundaryFace> faces;
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& conn = mesh.elements[e];
    for (int f = 0; f < 6; ++f) {
      const auto& lf = hex8::kFaces[f];
      std::array<int, 4> nodes{conn[lf[0]], conn[lf[1]], conn[lf[2]], conn[lf[3]]};
      auto key = nodes;
      std::sort(key.begin(), key.end());
      if (count[key] != 1) continue;
      const auto& p0 = mesh.nodes[nodes[0]];
      const auto& p1 = mesh.nodes[nodes[1]];
      const auto& p2 = mesh.nodes[nodes[2]];
      const auto& p3 = mesh.nodes[nodes[3]];
      const Eigen::Vector3d d1(p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]);
      const Eigen::Vector3d d2(p3[0] - p1[0], p3[1] - p1[1], p3[2] - p1[2]);
      Eigen::Vector3d n = d1.cross(d2);
      const double len = n.norm();
      if (len > 0) n /= len;
      faces.push_back({static_cast<int>(e), f, nodes, {n[0], n[1], n[2]}, ""});
    }
  }
  return faces;
}

double meshed_volume(const Mesh& mesh) {
  double v = 0.0;
  for (const auto& conn : mesh.elements) v += hex8::element_volume(hex8::gather(mesh.nodes, conn));
  return v;
}

double bounding_box_diagonal(const Mesh& mesh) {
  if (mesh.nodes.empty()) return 0.0;
  Vec3 lo = mesh.nodes.front(), hi = mesh.nodes.front();
  for (const auto& p : mesh.nodes) {
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  return std::sqrt((hi[0] - lo[0]) * (hi[0] - lo[0]) + (hi[1] - lo[1]) * (hi[1] - lo[1]) +
                   (hi[2] - lo[2]) * (hi[2] - lo[2]));
}

SolidModel make_box_solid(double lx, double ly, double lz, int nx, int ny, int nz) {
  if (!(lx > 0 && ly > 0 && lz > 0) || nx < 1 || ny < 1 || nz < 1) {
    throw Error(ErrorCode::kDegenerateGeometry, "box: dimensions and divisions must be positive");
  }
  MeshBuilder b(std::max({lx, ly, lz}));
  add_box(b, 0, lx, 0, ly, 0, lz, nx, ny, nz);
  SolidModel s;
  s.category_id = "box";
  s.params.values = {lx, ly, lz};
  s.mesh = b.finish();
  s.boundary_faces = extract_boundary_faces(s.mesh);
  for (auto& f : s.boundary_faces) {
    f.tag = box_side(f.normal, {"x0", "x1", "y0", "y1", "z0", "z1"});
  }
  s.volume_mm3 = lx * ly * lz;
  return s;
}

SolidModel generate_solid(const PartCategory& category, const ParamVector& params,
                          int mesh_density) {
  const auto& entry = find_entry(category.id);
  if (mesh_density < 1) {
    throw Error(ErrorCode::kMalformedArgs, "mesh density must be a positive integer");
  }
  check_bounds(entry.category, params);
  BuildOutput built = entry.build(params.values, mesh_density);

  for (std::size_t e = 0; e < built.mesh.elements.size(); ++e) {
    const double det = hex8::min_gauss_jacobian(hex8::gather(built.mesh.nodes, built.mesh.elements[e]));
    if (!(det > 0.0)) {
      throw Error(ErrorCode::kMeshingFailure,
                  category.id + ": element " + std::to_string(e) +
                      " has a non-positive Jacobian determinant");
    }
  }

  SolidModel s;
  s.category_id = category.id;
  s.params = params;
  s.mesh_density = mesh_density;
  s.boundary_faces = extract_boundary_faces(built.mesh);
  for (auto& f : s.boundary_faces) {
    f.tag = built.classify(face_centroid(built.mesh, f.nodes), f.normal);
  }
  s.mesh = std::move(built.mesh);
  s.anchors = std::move(built.anchors);
  s.volume_mm3 = built.volume;
  return s;
}

SolidModel generate_solid(std::string_view category_id, const ParamVector& params,
                          int mesh_density) {
  return generate_solid(find_category(category_id), params, mesh_density);
}

double analytic_volume(std::string_view category_id, const ParamVector& params) {
  const auto& cat = find_category(category_id);
  check_bounds(cat, params);
  const auto& v = params.values;
  if (category_id == "flat_plate") return v[0] * v[1] * v[2];
  if (category_id == "cantilever_box_beam") {
    if (2 * v[3] >= v[1] || 2 * v[3] >= v[2]) degenerate(cat.id, "hollow section vanishes");
    return v[0] * (v[1] * v[2] - (v[1] - 2 * v[3]) * (v[2] - 2 * v[3]));
  }
  if (category_id == "l_bracket") {
    if (v[3] >= v[0] || v[3] >= v[1]) degenerate(cat.id, "thickness exceeds a leg");
    return v[2] * v[3] * (v[0] + v[1] - v[3]);
  }
  if (category_id == "annular_flange") {
    if (v[1] >= v[0]) degenerate(cat.id, "inner_radius must be below outer_radius");
    return kPi * (v[0] * v[0] - v[1] * v[1]) * v[2];
  }
  if (category_id == "solid_cylinder_bushing") return kPi * v[0] * v[0] * v[1];
  if (category_id == "hex_prism_nut_blank") return std::sqrt(3.0) / 2.0 * v[0] * v[0] * v[1];
  throw Error(ErrorCode::kUnknownCategory, "no analytic volume for '" + cat.id + "'");
}

// ---------------------------------------------------------------------------
// Mesh interchange file

void write_mesh_file(const SolidModel& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write mesh file '" + path + "'");
  out << std::setprecision(17);
  out << "cadloop-mesh 1\n";
  out << "category " << s.category_id << "\n";
  out << "mesh_density " << s.mesh_density << "\n";
  const PartCategory* cat = nullptr;
  for (const auto& c : part_categories()) {
    if (c.id == s.category_id) cat = &c;
  }
  out << "params " << s.params.values.size() << "\n";
  for (std::size_t i = 0; i < s.params.values.size(); ++i) {
    const std::string name =
        cat && i < cat->parameters.size() ? cat->parameters[i].name : "p" + std::to_string(i);
    out << name << " " << s.params.values[i] << "\n";
  }
  out << "volume_mm3 " << s.volume_mm3 << "\n";
  out << "nodes " << s.mesh.nodes.size() << "\n";
  for (const auto& p : s.mesh.nodes) out << p[0] << " " << p[1] << " " << p[2] << "\n";
  out << "elements " << s.mesh.elements.size() << "\n";
  for (const auto& e : s.mesh.elements) {
    for (int a = 0; a < 8; ++a) out << e[a] << (a == 7 ? "\n" : " ");
  }
  out << "boundary_faces " << s.boundary_faces.size() << "\n";
  for (const auto& f : s.boundary_faces) {
    out << f.element << " " << f.local_face << " " << f.tag << " " << f.nodes[0] << " "
        << f.nodes[1] << " " << f.nodes[2] << " " << f.nodes[3] << " " << f.normal[0] << " "
        << f.normal[1] << " " << f.normal[2] << "\n";
  }
  out << "anchors " << s.anchors.size() << "\n";
  for (const auto& a : s.anchors) {
    out << role_name(a.role) << " " << a.face_tag << " " << a.position[0] << " "
        << a.position[1] << " " << a.position[2] << "\n";
  }
  out << "end\n";
  if (!out) throw Error(ErrorCode::kIo, "error while writing mesh file '" + path + "'");
}

SolidModel read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open mesh file '" + path + "'");
  auto expect = [&](const std::string& keyword) {
    std::string word;
    if (!(in >> word) || word != keyword) {
      throw Error(ErrorCode::kParse, path + ": expected '" + keyword + "', got '" + word + "'");
    }
  };
  auto count = [&](const std::string& keyword) {
    expect(keyword);
    std::size_t n = 0;
    if (!(in >> n)) throw Error(ErrorCode::kParse, path + ": bad count after " + keyword);
    return n;
  };
  SolidModel s;
  int version = 0;
  expect("cadloop-mesh");
  in >> version;
  if (version != 1) throw Error(ErrorCode::kParse, path + ": unsupported mesh version");
  expect("category");
  in >> s.category_id;
  expect("mesh_density");
  in >> s.mesh_density;
  const std::size_t np = count("params");
  for (std::size_t i = 0; i < np; ++i) {
    std::string name;
    double v = 0;
    in >> name >> v;
    s.params.values.push_back(v);
  }
  expect("volume_mm3");
  in >> s.volume_mm3;
  s.mesh.nodes.resize(count("nodes"));
  for (auto& p : s.mesh.nodes) in >> p[0] >> p[1] >> p[2];
  s.mesh.elements.resize(count("elements"));
  for (auto& e : s.mesh.elements) {
    for (int a = 0; a < 8; ++a) in >> e[a];
  }
  s.boundary_faces.resize(count("boundary_faces"));
  for (auto& f : s.boundary_faces) {
    in >> f.element >> f.local_face >> f.tag >> f.nodes[0] >> f.nodes[1] >> f.nodes[2] >>
        f.nodes[3] >> f.normal[0] >> f.normal[1] >> f.normal[2];
  }
  s.anchors.resize(count("anchors"));
  for (auto& a : s.anchors) {
    std::string role;
    in >> role >> a.face_tag >> a.position[0] >> a.position[1] >> a.position[2];
    a.role = parse_role(role);
  }
  expect("end");
  if (!in) throw Error(ErrorCode::kParse, path + ": truncated mesh file");
  const auto nn = static_cast<int>(s.mesh.nodes.size());
  for (const auto& e : s.mesh.elements) {
    for (int n : e) {
      if (n < 0 || n >= nn) throw Error(ErrorCode::kParse, path + ": node index out of range");
    }
  }
  return s;
}

}  // namespace cadloop
