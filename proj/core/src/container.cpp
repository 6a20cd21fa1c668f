#include "dtanma/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dtanma {

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'T', 'A', 'N', 'M', 'A', '0', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_doubles(std::ostream& os, const double* data, std::size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& is, double* data, std::size_t n) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace

void save_posterior(const std::string& path, const PosteriorSamples& samples) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open container for writing: " + path);

  std::ostringstream header;
  header << "spec_hash " << samples.spec_hash << '\n'
         << "data_fingerprint " << samples.data_fingerprint << '\n'
         << "chains " << samples.n_chains << '\n'
         << "kept " << samples.n_kept << '\n'
         << "dim " << samples.dim << '\n'
         << "config_begin\n"
         << samples.config.to_text() << "config_end\n"
         << "layout_begin\n"
         << samples.layout->to_text() << "layout_end\n";
  const std::string h = header.str();

  os.write(kMagic, sizeof kMagic);
  write_u64(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));

  for (int c = 0; c < samples.n_chains; ++c)
    write_doubles(os, samples.draws[c].data(), samples.draws[c].size());
  for (int c = 0; c < samples.n_chains; ++c)
    write_doubles(os, samples.deviance[c].data(), samples.deviance[c].size());

  for (int c = 0; c < samples.n_chains; ++c) {
    const ChainCheckpoint& cp = samples.checkpoints[c];
    write_u64(os, static_cast<std::uint64_t>(cp.iterations_done));
    for (std::uint64_t w : cp.rng) write_u64(os, w);
    write_u64(os, static_cast<std::uint64_t>(cp.state.size()));
    write_doubles(os, cp.state.data(), static_cast<std::size_t>(cp.state.size()));
    write_u64(os, cp.scalar_log_scales.size());
    write_doubles(os, cp.scalar_log_scales.data(), cp.scalar_log_scales.size());
    write_u64(os, cp.block_log_scales.size());
    write_doubles(os, cp.block_log_scales.data(), cp.block_log_scales.size());
  }
  if (!os) throw std::runtime_error("write failure on container: " + path);
  os.close();

  // Structured-text index alongside the binary body.
  std::ofstream idx(path + ".idx");
  if (!idx) throw std::runtime_error("cannot open index for writing: " + path + ".idx");
  idx << "container " << path << '\n'
      << "chains " << samples.n_chains << '\n'
      << "kept " << samples.n_kept << '\n'
      << "dim " << samples.dim << '\n'
      << "header_bytes " << h.size() << '\n'
      << "draws_offset " << sizeof kMagic + sizeof(std::uint64_t) + h.size() << '\n'
      << "deviance_offset "
      << sizeof kMagic + sizeof(std::uint64_t) + h.size() +
             static_cast<std::size_t>(samples.n_chains) * samples.n_kept * samples.dim *
                 sizeof(double)
      << '\n';
  for (int p = 0; p < samples.dim; ++p)
    idx << "param " << p << ' ' << samples.layout->names[p] << '\n';
}

PosteriorSamples load_posterior(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open container: " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("not a dtanma posterior container: " + path);
  const std::uint64_t header_bytes = read_u64(is);
  std::string header(header_bytes, '\0');
  is.read(header.data(), static_cast<std::streamsize>(header_bytes));
  if (!is) throw std::runtime_error("truncated container header: " + path);

  PosteriorSamples out;
  std::istringstream hs(header);
  std::string key;
  hs >> key >> out.spec_hash;
  hs >> key >> out.data_fingerprint;
  hs >> key >> out.n_chains;
  hs >> key >> out.n_kept;
  hs >> key >> out.dim;
  std::string line;
  std::getline(hs, line);
  std::getline(hs, line);
  if (line != "config_begin") throw std::runtime_error("container: expected config block");
  std::string config_text;
  while (std::getline(hs, line) && line != "config_end") config_text += line + '\n';
  out.config = SamplerConfig::from_text(config_text);
  std::getline(hs, line);
  if (line != "layout_begin") throw std::runtime_error("container: expected layout block");
  std::string layout_text;
  while (std::getline(hs, line) && line != "layout_end") layout_text += line + '\n';
  out.layout = Layout::from_text(layout_text);
  if (out.layout->dim != out.dim)
    throw std::runtime_error("container: layout dimension mismatch");

  out.draws.resize(out.n_chains);
  out.deviance.resize(out.n_chains);
  for (int c = 0; c < out.n_chains; ++c) {
    out.draws[c].resize(static_cast<std::size_t>(out.n_kept) * out.dim);
    read_doubles(is, out.draws[c].data(), out.draws[c].size());
  }
  for (int c = 0; c < out.n_chains; ++c) {
    out.deviance[c].resize(out.n_kept);
    read_doubles(is, out.deviance[c].data(), out.deviance[c].size());
  }
  out.checkpoints.resize(out.n_chains);
  for (int c = 0; c < out.n_chains; ++c) {
    ChainCheckpoint& cp = out.checkpoints[c];
    cp.iterations_done = static_cast<long>(read_u64(is));
    for (auto& w : cp.rng) w = read_u64(is);
    const auto state_size = read_u64(is);
    cp.state.resize(static_cast<Eigen::Index>(state_size));
    read_doubles(is, cp.state.data(), state_size);
    cp.scalar_log_scales.resize(read_u64(is));
    read_doubles(is, cp.scalar_log_scales.data(), cp.scalar_log_scales.size());
    cp.block_log_scales.resize(read_u64(is));
    read_doubles(is, cp.block_log_scales.data(), cp.block_log_scales.size());
  }
  if (!is) throw std::runtime_error("truncated container body: " + path);
  return out;
}

}  // namespace dtanma
