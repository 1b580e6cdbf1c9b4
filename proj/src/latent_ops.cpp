#include "demea/latent_ops.hpp"

#include <fstream>
#include <string>

#include "demea/error.hpp"

namespace demea {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": latent dimensions differ (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

}  // namespace

LatentCode interpolate(std::span<const float> source, std::span<const float> target, double alpha) {
  require_same_dim(source.size(), target.size(), "interpolate");
  LatentCode out(source.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((1.0 - alpha) * source[i] + alpha * target[i]);
  }
  return out;
}

LatentSequence transfer(const LatentSequence& source, std::span<const float> target_pose0) {
  if (source.empty()) throw Error("transfer: empty sequence");
  require_same_dim(source.front().size(), target_pose0.size(), "transfer");
  LatentCode offset(target_pose0.size());
  for (std::size_t k = 0; k < offset.size(); ++k) offset[k] = target_pose0[k] - source.front()[k];
  LatentSequence out;
  out.reserve(source.size());
  out.emplace_back(target_pose0.begin(), target_pose0.end());
  for (std::size_t i = 1; i < source.size(); ++i) {
    require_same_dim(source[i].size(), offset.size(), "transfer");
    LatentCode m(offset.size());
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = source[i][k] + offset[k];
    out.push_back(std::move(m));
  }
  return out;
}

LatentSequence smooth(const LatentSequence& sequence, double alpha) {
  if (sequence.empty()) throw Error("smooth: empty sequence");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("smooth: alpha must lie in [0, 1]");
  LatentSequence out;
  out.reserve(sequence.size());
  out.push_back(sequence.front());
  for (std::size_t i = 1; i < sequence.size(); ++i) {
    require_same_dim(sequence[i].size(), out.back().size(), "smooth");
    LatentCode d(sequence[i].size());
    for (std::size_t k = 0; k < d.size(); ++k) {
      d[k] = static_cast<float>(alpha * sequence[i][k] + (1.0 - alpha) * out.back()[k]);
    }
    out.push_back(std::move(d));
  }
  return out;
}

void write_latent_csv(const LatentSequence& sequence, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(9);
  for (const LatentCode& code : sequence) {
    for (std::size_t k = 0; k < code.size(); ++k) out << (k ? "," : "") << code[k];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

LatentSequence read_latent_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LatentSequence seq;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    LatentCode code;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = std::min(line.find(',', pos), line.size());
      std::string field = line.substr(pos, comma - pos);
      try {
        std::size_t used = 0;
        code.push_back(std::stof(field, &used));
        if (field.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError("bad latent value '" + field + "'", line_no);
      }
      pos = comma + 1;
    }
    if (!seq.empty() && code.size() != seq.front().size()) throw ParseError("inconsistent latent dimension", line_no);
    seq.push_back(std::move(code));
  }
  return seq;
}

}  // namespace demea
