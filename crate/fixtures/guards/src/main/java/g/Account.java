package g;

public class Account {

    private int balance;

    public Account(int n) {
        init(n - 1);
    }

    private void init(int m) {
        if (m < 0) {
            throw new IllegalArgumentException("negative");
        }
        balance = m;
    }
}
