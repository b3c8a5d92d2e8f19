#include "nepv/commands.hpp"

int main(int argc, char** argv) { return nepv::cli::run(argc, argv); }
