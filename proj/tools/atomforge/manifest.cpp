#include <openssl/evp.h>

#include <fmt/format.h>

#include <memory>

#include "atomforge/errors.hpp"
#include "commands.hpp"
#include "json.hpp"

namespace atomforge::cli {

std::string sha256_hex(const std::string& bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> md(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!md || EVP_DigestInit_ex(md.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(md.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(md.get(), digest, &len) != 1)
    throw IoError("sha256: digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

void write_manifest(Context& ctx, double wall_time_s) {
  nlohmann::ordered_json m;
  m["command_line"] = ctx.argv;
  m["config_hash"] = "sha256:" + sha256_hex(ctx.config_bytes);
  m["seed"] = ctx.cfg.seed;
  m["version"] = ATOMFORGE_VERSION;
  m["outputs"] = ctx.outputs;
  m["wall_time_s"] = wall_time_s;
  const auto outputs = ctx.outputs;
  ctx.write_text("manifest.json", m.dump(2) + "\n");
  ctx.outputs = outputs;
}

}  // namespace atomforge::cli
