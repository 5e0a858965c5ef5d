#include "actionkit/cli.hpp"

int main(int argc, char** argv) {
  return actionkit::cli::dispatch(argc, argv);
}
