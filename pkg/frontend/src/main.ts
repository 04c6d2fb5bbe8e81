import * as readline from 'node:readline';

import { PlannerSession } from './protocol';

function main(): void {
  const session = new PlannerSession((line) => {
    process.stdout.write(line + '\n');
  });
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on('line', (line) => {
    if (!session.handleLine(line)) {
      rl.close();
      process.exit(0);
    }
  });
  rl.on('close', () => {
    process.exit(0);
  });
}

main();
