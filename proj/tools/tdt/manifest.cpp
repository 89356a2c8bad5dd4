#include "manifest.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "tdt/errors.hpp"
#include "tdt/serialization.hpp"

namespace tdt::cli {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path, "cannot open file for checksum");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

void RunManifest::write(const std::string& primary_output) const {
  io::json files = io::json::array();
  for (const auto& o : outputs) files.push_back({{"path", o}, {"sha256", sha256_file(o)}});
  io::json j{{"command", command},
             {"config", config_path.empty() ? io::json(nullptr) : io::json(config_path)},
             {"seed", seed},
             {"outputs", files},
             {"wall_clock_s", wall_clock_s}};
  io::write_text_file(primary_output + ".manifest.json", io::dump(j));
}

}  // namespace tdt::cli
