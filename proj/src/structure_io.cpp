#include "qnm/structure_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qnm/error.hpp"

namespace qnm {

using nlohmann::json;

StructureFile parse_structure(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SolverError(ErrorKind::InvalidArgument, std::string("structure JSON: ") + e.what());
  }
  try {
    const auto bounds = j.at("bounds").get<std::vector<double>>();
    if (bounds.size() != 2) throw SolverError(ErrorKind::InvalidArgument, "bounds must have two entries");
    StructureFile f;
    f.bounds = {bounds[0], bounds[1]};
    f.bounds.validate();
    f.structure = PiecewiseStructure::make(j.at("breakpoints").get<std::vector<double>>(),
                                           j.at("values").get<std::vector<double>>());
    if (!f.structure.within(f.bounds, 1e-12))
      throw SolverError(ErrorKind::InvalidArgument, "structure values violate bounds");
    return f;
  } catch (const json::exception& e) {
    throw SolverError(ErrorKind::InvalidArgument, std::string("structure JSON: ") + e.what());
  }
}

std::string dump_structure(const StructureFile& file) {
  json j;
  j["bounds"] = {file.bounds.b1, file.bounds.b2};
  j["breakpoints"] = file.structure.breakpoints();
  j["values"] = file.structure.values();
  return j.dump(2) + "\n";
}

StructureFile read_structure(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SolverError(ErrorKind::InvalidArgument, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_structure(ss.str());
}

void write_structure(const std::filesystem::path& path, const StructureFile& file) {
  write_text_atomic(path, dump_structure(file));
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw SolverError(ErrorKind::InvalidArgument, "cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace qnm
