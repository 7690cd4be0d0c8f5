#include "synchro/trace_log.hpp"

#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "synchro/csv.hpp"

namespace synchro {
namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  return in;
}

template <typename T>
T narrow(std::uint64_t v, std::size_t line, const char* field) {
  if (v > std::numeric_limits<T>::max()) {
    throw SchemaError("line " + std::to_string(line) + ": " + field + " out of range");
  }
  return static_cast<T>(v);
}

// Calls `row(fields, line_no)` for each data line after checking the header.
template <typename RowFn>
void read_rows(std::istream& in, const char* header, std::size_t columns, RowFn row) {
  std::string line;
  if (!std::getline(in, line) || csv::chomp(line) != header) {
    throw SchemaError(std::string("expected header '") + header + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = csv::chomp(line);
    if (text.empty()) continue;
    const auto fields = csv::split(text);
    if (fields.size() != columns) {
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(columns) + " columns");
    }
    try {
      row(fields, line_no);
    } catch (const csv::ParseError& e) {
      throw SchemaError(e.what());
    }
  }
}

}  // namespace

void write_send_log(std::ostream& out, const std::vector<SendLogEntry>& entries) {
  out << kSendLogHeader << '\n';
  for (const auto& e : entries) {
    out << e.seq << ',' << e.identity.id_code << ',' << e.identity.soc << ','
        << e.identity.frac_sec << ',' << e.send_ts_ns << '\n';
  }
}

void write_recv_log(std::ostream& out, const std::vector<RecvLogEntry>& entries) {
  out << kRecvLogHeader << '\n';
  for (const auto& e : entries) {
    out << e.identity.id_code << ',' << e.identity.soc << ',' << e.identity.frac_sec << ','
        << e.recv_ts_ns << ',' << e.size_bytes << '\n';
  }
}

void write_send_log(const std::string& path, const std::vector<SendLogEntry>& entries) {
  auto out = open_out(path);
  write_send_log(out, entries);
}

void write_recv_log(const std::string& path, const std::vector<RecvLogEntry>& entries) {
  auto out = open_out(path);
  write_recv_log(out, entries);
}

std::vector<SendLogEntry> read_send_log(std::istream& in) {
  std::vector<SendLogEntry> out;
  read_rows(in, kSendLogHeader, 5, [&](const auto& f, std::size_t line) {
    SendLogEntry e;
    e.seq = csv::to_uint(f[0], line);
    e.identity.id_code = narrow<std::uint16_t>(csv::to_uint(f[1], line), line, "idcode");
    e.identity.soc = narrow<std::uint32_t>(csv::to_uint(f[2], line), line, "soc");
    e.identity.frac_sec = narrow<std::uint32_t>(csv::to_uint(f[3], line), line, "fracsec");
    e.send_ts_ns = csv::to_int(f[4], line);
    out.push_back(e);
  });
  return out;
}

std::vector<RecvLogEntry> read_recv_log(std::istream& in) {
  std::vector<RecvLogEntry> out;
  read_rows(in, kRecvLogHeader, 5, [&](const auto& f, std::size_t line) {
    RecvLogEntry e;
    e.identity.id_code = narrow<std::uint16_t>(csv::to_uint(f[0], line), line, "idcode");
    e.identity.soc = narrow<std::uint32_t>(csv::to_uint(f[1], line), line, "soc");
    e.identity.frac_sec = narrow<std::uint32_t>(csv::to_uint(f[2], line), line, "fracsec");
    e.recv_ts_ns = csv::to_int(f[3], line);
    e.size_bytes = narrow<std::uint32_t>(csv::to_uint(f[4], line), line, "size_bytes");
    out.push_back(e);
  });
  return out;
}

std::vector<SendLogEntry> read_send_log(const std::string& path) {
  auto in = open_in(path);
  return read_send_log(in);
}

std::vector<RecvLogEntry> read_recv_log(const std::string& path) {
  auto in = open_in(path);
  return read_recv_log(in);
}

}  // namespace synchro
