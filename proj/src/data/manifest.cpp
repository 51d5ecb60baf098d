#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "sisc/data.hpp"
#include "sisc/io.hpp"

namespace sisc {

namespace {

constexpr const char* kHeader = "image_path,nodule_id,slice_idx,rad_id,center_x,center_y,malignancy";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_int(const std::string& s, long& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stol(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size() && std::isfinite(out);
}

}  // namespace

std::vector<AnnotationRecord> parse_manifest(const std::string& text,
                                             const std::filesystem::path& base_dir, bool check_files) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  std::vector<std::string> problems;
  std::size_t first_bad = 0;
  auto problem = [&](std::size_t line_no, const std::string& what) {
    problems.push_back("line " + std::to_string(line_no) + ": " + what);
    if (first_bad == 0) first_bad = line_no;
  };

  if (!std::getline(in, line)) throw ParseError("manifest is empty (missing header)", 1);
  ++number;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw ParseError("line 1: expected header '" + std::string(kHeader) + "'", 1);

  std::vector<AnnotationRecord> records;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::set<std::string> checked;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const std::size_t before = problems.size();
    if (f.size() != 7) {
      problem(number, "expected 7 fields, got " + std::to_string(f.size()));
      continue;
    }
    long slice = 0, score = 0;
    double cx = 0, cy = 0;
    if (f[0].empty()) problem(number, "empty image_path");
    if (f[1].empty()) problem(number, "empty nodule_id");
    if (!parse_int(f[2], slice)) problem(number, "slice_idx '" + f[2] + "' is not an integer");
    if (f[3].empty()) problem(number, "empty rad_id");
    if (!parse_real(f[4], cx)) problem(number, "center_x '" + f[4] + "' is not a number");
    if (!parse_real(f[5], cy)) problem(number, "center_y '" + f[5] + "' is not a number");
    if (!parse_int(f[6], score)) {
      problem(number, "malignancy '" + f[6] + "' is not an integer");
    } else if (score < 1 || score > 5) {
      problem(number, "malignancy " + f[6] + " outside [1, 5]");
    }
    if (problems.size() != before) continue;

    const auto key = std::make_pair(f[1], static_cast<int>(slice));
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, records.size()).first;
      records.push_back(AnnotationRecord{f[0], f[1], static_cast<int>(slice), {}});
    }
    AnnotationRecord& rec = records[it->second];
    if (rec.image_path != f[0]) {
      problem(number, "nodule " + f[1] + " slice " + f[2] + " refers to two images");
      continue;
    }
    bool duplicate = false;
    for (const auto& e : rec.entries) duplicate = duplicate || e.rad_id == f[3];
    if (duplicate) {
      problem(number, "reader " + f[3] + " appears twice for nodule " + f[1] + " slice " + f[2]);
      continue;
    }
    if (rec.entries.size() == 4) {
      problem(number, "nodule " + f[1] + " slice " + f[2] + " has more than 4 readers");
      continue;
    }
    rec.entries.push_back(RadiologistEntry{f[3], cx, cy, static_cast<int>(score)});
    if (check_files && checked.insert(f[0]).second) {
      const auto path = std::filesystem::path(f[0]).is_absolute() ? std::filesystem::path(f[0])
                                                                 : base_dir / f[0];
      if (!std::filesystem::exists(path)) {
        throw IoError("line " + std::to_string(number) + ": image " + path.string() + " not found");
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "manifest has " + std::to_string(problems.size()) + " bad row(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ParseError(msg, first_bad);
  }
  return records;
}

std::vector<AnnotationRecord> load_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_text(path), path.parent_path(), true);
}

std::string write_manifest(const std::vector<AnnotationRecord>& records) {
  std::ostringstream os;
  os << kHeader << '\n';
  for (const auto& r : records) {
    for (const auto& e : r.entries) {
      os << r.image_path << ',' << r.nodule_id << ',' << r.slice_idx << ',' << e.rad_id << ','
         << io::format_double(e.center_x) << ',' << io::format_double(e.center_y) << ','
         << e.malignancy << '\n';
    }
  }
  return os.str();
}

}  // namespace sisc
