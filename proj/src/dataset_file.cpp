#include <fstream>
#include <iterator>

#include "meshdiff/binary_io.hpp"
#include "meshdiff/error.hpp"
#include "meshdiff/preprocess.hpp"

namespace meshdiff {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

QuantizedTriangleSoup DatasetFile::soup(std::size_t i) const {
  const DatasetRecord& r = records.at(i);
  QuantizedTriangleSoup s = QuantizedTriangleSoup::empty(bits, max_faces, r.class_id);
  if (static_cast<int>(r.faces.size()) > max_faces) throw CapacityError("record exceeds max_faces");
  for (std::size_t j = 0; j < r.faces.size(); ++j) {
    s.faces[j] = r.faces[j];
    s.mask[j] = 1;
  }
  return s;
}

void DatasetFile::add(const QuantizedTriangleSoup& soup) {
  if (soup.bits != bits) throw ArgumentError("soup bit depth does not match dataset");
  DatasetRecord r;
  r.class_id = soup.class_label;
  for (std::size_t j = 0; j < soup.faces.size(); ++j)
    if (soup.mask[j]) r.faces.push_back(soup.faces[j]);
  if (static_cast<int>(r.faces.size()) > max_faces) throw CapacityError("soup exceeds dataset max_faces");
  records.push_back(std::move(r));
}

void DatasetFile::validate() const {
  if (bits < 1 || bits > 16) throw ArgumentError("bits must be in [1, 16]");
  if (max_faces < 1 || max_faces > 65535) throw ArgumentError("max_faces must be in [1, 65535]");
  const int c = 1 << bits;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.class_id < 0 || r.class_id >= static_cast<int>(class_names.size()))
      throw DomainError("record " + std::to_string(i) + " has unknown class id " + std::to_string(r.class_id));
    if (static_cast<int>(r.faces.size()) > max_faces)
      throw CapacityError("record " + std::to_string(i) + " exceeds max_faces");
    for (const auto& f : r.faces)
      for (std::uint16_t v : f)
        if (v >= c) throw DomainError("record " + std::to_string(i) + " has category out of range");
  }
}

std::vector<std::uint8_t> serialize_dataset(const DatasetFile& file) {
  file.validate();
  ByteWriter w;
  w.put_raw("PDDS");
  w.put<std::uint16_t>(DatasetFile::kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(file.bits));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(file.max_faces));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(file.class_names.size()));
  for (const auto& name : file.class_names) {
    if (name.size() > 65535) throw ArgumentError("class name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_raw(name);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.records.size()));
  const bool wide = file.bits > 8;
  for (const auto& r : file.records) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.class_id));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.faces.size()));
    for (const auto& f : r.faces)
      for (std::uint16_t v : f) {
        if (wide) w.put<std::uint16_t>(v);
        else w.put<std::uint8_t>(static_cast<std::uint8_t>(v));
      }
  }
  return std::move(w).bytes();
}

DatasetFile parse_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.get_string(4, "magic") != "PDDS") throw FormatError(0, "bad magic, not a dataset file");
  const std::size_t version_at = r.offset();
  if (r.get<std::uint16_t>("version") != DatasetFile::kVersion) throw FormatError(version_at, "unsupported version");
  DatasetFile file;
  const std::size_t bits_at = r.offset();
  file.bits = r.get<std::uint8_t>("bits");
  if (file.bits < 1 || file.bits > 16) throw FormatError(bits_at, "bits out of range");
  file.max_faces = r.get<std::uint16_t>("max_faces");
  const int classes = r.get<std::uint16_t>("class count");
  for (int c = 0; c < classes; ++c) {
    const auto len = r.get<std::uint16_t>("class name length");
    file.class_names.push_back(r.get_string(len, "class name"));
  }
  const std::uint32_t count = r.get<std::uint32_t>("record count");
  const bool wide = file.bits > 8;
  const int categories = 1 << file.bits;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t record_at = r.offset();
    DatasetRecord rec;
    rec.class_id = r.get<std::uint16_t>("class id");
    if (rec.class_id >= classes) throw FormatError(record_at, "class id out of range");
    const int m = r.get<std::uint16_t>("face count");
    if (m > file.max_faces) throw FormatError(record_at, "face count exceeds max_faces");
    rec.faces.resize(static_cast<std::size_t>(m));
    for (auto& f : rec.faces)
      for (auto& v : f) {
        const std::size_t at = r.offset();
        v = wide ? r.get<std::uint16_t>("category") : r.get<std::uint8_t>("category");
        if (v >= categories) throw FormatError(at, "category out of range");
      }
    file.records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after last record");
  return file;
}

void write_dataset_file(const std::filesystem::path& path, const DatasetFile& file) {
  write_file_bytes(path.string(), serialize_dataset(file));
}

DatasetFile read_dataset_file(const std::filesystem::path& path) { return parse_dataset(read_file_bytes(path.string())); }

}  // namespace meshdiff
