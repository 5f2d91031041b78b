#pragma once

// Parametric part templates and the structured hexahedral solids they
// generate. All lengths are millimetres.

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cadloop {

using Vec3 = std::array<double, 3>;

enum class AnchorRole { kFixed, kLoad };

std::string_view role_name(AnchorRole role);
AnchorRole parse_role(std::string_view name);

// How a parameter influences the structural response. Used by the scripted
// policies to stay template-agnostic.
enum class ParamRole {
  kStiffness,   // increasing it stiffens the part
  kCompliance,  // increasing it softens the part
  kBulk,        // mostly drives material volume
  kNeutral,
};

std::string_view param_role_name(ParamRole role);

struct ParamSpec {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  std::string unit;  // "mm" or "-"
  ParamRole role = ParamRole::kNeutral;
};

struct AnchorSpec {
  AnchorRole role;
  std::string face_tag;
  std::string location;  // human-readable placement rule
};

struct PartCategory {
  std::string id;
  std::string description;
  std::vector<ParamSpec> parameters;
  std::vector<AnchorSpec> anchors;
  bool held_out = false;  // reserved for the generalization split
};

struct ParamVector {
  std::vector<double> values;

  bool operator==(const ParamVector&) const = default;
};

// Name -> value map in schema order; the wire and task-file representation.
nlohmann::json params_to_json(const PartCategory& category, const ParamVector& params);
// Throws kMalformedArgs if a schema name is missing, non-numeric or extra.
ParamVector params_from_json(const PartCategory& category, const nlohmann::json& obj);

struct Mesh {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 8>> elements;
};

struct BoundaryFace {
  int element = 0;
  int local_face = 0;
  std::array<int, 4> nodes{};
  Vec3 normal{};  // outward unit normal at the face centre
  std::string tag;
};

struct AnchorPoint {
  Vec3 position{};
  AnchorRole role = AnchorRole::kFixed;
  std::string face_tag;
};

struct SolidModel {
  std::string category_id;
  ParamVector params;
  int mesh_density = 1;
  Mesh mesh;
  std::vector<BoundaryFace> boundary_faces;
  std::vector<AnchorPoint> anchors;
  double volume_mm3 = 0.0;
};

// Registry of the shipped templates.
const std::vector<PartCategory>& part_categories();
const PartCategory& find_category(std::string_view id);

const std::vector<ParamSpec>& param_schema(std::string_view category_id);

// Builds the meshed solid. Errors: kUnknownCategory, kParamOutOfBounds,
// kDegenerateGeometry, kMeshingFailure (non-positive Jacobian).
SolidModel generate_solid(const PartCategory& category, const ParamVector& params,
                          int mesh_density);
SolidModel generate_solid(std::string_view category_id, const ParamVector& params,
                          int mesh_density);

inline double solid_volume(const SolidModel& solid) { return solid.volume_mm3; }

// Analytic volume of a template without meshing it.
double analytic_volume(std::string_view category_id, const ParamVector& params);

// Sum of Gauss-integrated element volumes.
double meshed_volume(const Mesh& mesh);

// Axis-aligned bounding-box diagonal of the mesh nodes.
double bounding_box_diagonal(const Mesh& mesh);

// Box [0,lx]x[0,ly]x[0,lz] split nx*ny*nz, tagged x0/x1/y0/y1/z0/z1 with no
// anchors. Building block for templates and analytical checks.
SolidModel make_box_solid(double lx, double ly, double lz, int nx, int ny, int nz);

// Recomputes boundary faces (with outward normals) from the elements.
std::vector<BoundaryFace> extract_boundary_faces(const Mesh& mesh);

// Mesh interchange file ("cadloop-mesh 1"); see docs/file_formats.md.
void write_mesh_file(const SolidModel& solid, const std::string& path);
SolidModel read_mesh_file(const std::string& path);

}  // namespace cadloop
